"""Driven Kerr resonator: input-output with an input capacitor, steady states,
bistability, transmission and transient dynamics.

Frequencies, rates and drive amplitudes are linear (X/2pi, Hz).  The
steady-state photon number n obeys the cubic

    |F|^2 = (D^2 + k^2/4) n + 2 K D n^2 + K^2 n^3,   D = w_s - w_d,

which is unchanged when every frequency and F are scaled by the same factor,
so it is solved in units of kappa.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .circuit import H_PLANCK

GROUND, EXCITED = "g", "e"


@dataclass(frozen=True)
class LineModel:
    kappa_prime: float = 21.2e6
    omega_r_prime: float = 7.659e9
    Z0: float = 50.0
    C_in: float = 0.0
    attenuation_A: float = 1.0

    def __post_init__(self):
        if self.C_in < 0:
            raise ValueError("C_in must be non-negative")
        if self.attenuation_A < 1:
            raise ValueError("attenuation_A must be >= 1")


@dataclass(frozen=True)
class KerrSystem:
    omega_g: float
    omega_e: float
    kappa: float
    K: float

    @classmethod
    def from_chi(cls, omega_r: float, chi: float, kappa: float, K: float) -> "KerrSystem":
        """w_e = w_r + chi, w_g = w_r - chi."""
        return cls(omega_g=omega_r - chi, omega_e=omega_r + chi, kappa=kappa, K=K)

    @property
    def chi(self) -> float:
        return 0.5 * (self.omega_e - self.omega_g)

    def omega(self, qubit_state: str) -> float:
        if qubit_state == GROUND:
            return self.omega_g
        if qubit_state == EXCITED:
            return self.omega_e
        raise ValueError(f"qubit_state must be 'g' or 'e', got {qubit_state!r}")


@dataclass(frozen=True)
class SteadyRoot:
    n: float
    alpha: complex
    stable: bool


@dataclass(frozen=True)
class SteadyStateSolution:
    roots: tuple

    @property
    def n_values(self) -> list:
        return [r.n for r in self.roots]

    def stable_roots(self) -> list:
        return [r for r in self.roots if r.stable]


# --- input-output -----------------------------------------------------------

def reflection_coefficient(line: LineModel, omega_probe) -> np.ndarray:
    w = 2 * np.pi * np.asarray(omega_probe, dtype=float)
    return 1.0 / (1.0 + 2j * w * line.Z0 * line.C_in)


def effective_line(line: LineModel, omega_probe: float):
    """(kappa_eff, omega_eff, Gamma) with Gamma evaluated at ``omega_probe``."""
    g = complex(reflection_coefficient(line, omega_probe))
    kappa = 0.5 * line.kappa_prime * (1 + g.real)
    omega = line.omega_r_prime + 0.25 * line.kappa_prime * g.imag
    return kappa, omega, g


def power_to_drive(line: LineModel, P: float, omega_probe: float) -> float:
    """Drive amplitude |F|/2pi (Hz) for an input power P (W) at linear frequency omega_probe.

    |F|^2 = (kappa'/4)|1 - Gamma|^2 P / (A hbar w) in angular units.
    """
    g = complex(reflection_coefficient(line, omega_probe))
    k_ang = 2 * np.pi * line.kappa_prime
    # hbar * w = h * f
    F2 = 0.25 * k_ang * abs(1 - g) ** 2 * P / (line.attenuation_A * H_PLANCK * omega_probe)
    return float(np.sqrt(F2) / (2 * np.pi))


def s21(line: LineModel, kappa_eff: float, omega_eff: float, omega_probe, prefactor: dict | None = None) -> np.ndarray:
    """Transmission past the resonator with an input capacitor.

    S21 = (A0 + A_w f) exp(-i(alpha0 + 2 pi tau f)) (1 - G) [1 - (1 + G)/(1 + Re G) k/(2iD + k)]
    with D = omega_eff - f and G = Gamma(f).
    """
    pf = {"A0": 1.0, "A_w": 0.0, "alpha0": 0.0, "tau": 0.0}
    if prefactor:
        unknown = set(prefactor) - set(pf)
        if unknown:
            raise KeyError(f"unknown prefactor key(s): {sorted(unknown)}")
        pf.update(prefactor)
    f = np.asarray(omega_probe, dtype=float)
    g = reflection_coefficient(line, f)
    delta = omega_eff - f
    if kappa_eff == 0:
        bracket = np.ones_like(g)
    else:
        bracket = 1 - (1 + g) / (1 + g.real) * kappa_eff / (2j * delta + kappa_eff)
    pre = (pf["A0"] + pf["A_w"] * f) * np.exp(-1j * (pf["alpha0"] + 2 * np.pi * pf["tau"] * f))
    return pre * (1 - g) * bracket


# --- steady states -------------------------------------------------------

def _cubic_coeffs(delta, K, kappa, F):
    return np.array([K * K, 2 * K * delta, delta * delta + 0.25 * kappa * kappa, -abs(F) ** 2], dtype=float)


def cubic_value(n, delta, K, kappa, F):
    return (delta * delta + 0.25 * kappa * kappa) * n + 2 * K * delta * n * n + K * K * n ** 3 - abs(F) ** 2


def cubic_slope(n, delta, K, kappa):
    """d|F|^2/dn; positive on stable branches."""
    return delta * delta + 0.25 * kappa * kappa + 4 * K * delta * n + 3 * K * K * n * n


def photon_roots(delta: float, K: float, kappa: float, F: float) -> np.ndarray:
    """All real non-negative roots of the cubic, ascending.

    The cubic is split at its critical points into monotone pieces and each
    piece with a sign change is solved by bracketing.
    """
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    if F == 0:
        return np.array([0.0])
    d, k, f = delta / kappa, K / kappa, abs(F) / kappa
    if k == 0:
        return np.array([f * f / (d * d + 0.25)])
    fn = lambda n: cubic_value(n, d, k, 1.0, f)
    # critical points: 3 k^2 n^2 + 4 k d n + (d^2 + 1/4) = 0
    disc = 16 * k * k * d * d - 12 * k * k * (d * d + 0.25)
    edges = [0.0]
    if disc > 0:
        r = np.sqrt(disc)
        edges += sorted(x for x in ((-4 * k * d - r) / (6 * k * k), (-4 * k * d + r) / (6 * k * k)) if x > 0)
    hi = max(edges[-1], 1.0)
    while fn(hi) <= 0:
        hi *= 2
    edges.append(hi)
    out = []
    for a, b in zip(edges, edges[1:]):
        fa, fb = fn(a), fn(b)
        if fa == 0 and a > 0:
            out.append(a)
        elif fa * fb < 0:
            out.append(brentq(fn, a, b, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500))
    if fn(edges[-1]) == 0:
        out.append(edges[-1])
    return np.unique(np.array(out))


def _discriminant(delta, K, kappa, F):
    # coefficients of K^2 n^3 + 2 K D n^2 + (D^2 + k^2/4) n - |F|^2, broadcasting
    a = K * K
    b = 2 * K * np.asarray(delta, float)
    c = np.asarray(delta, float) ** 2 + 0.25 * kappa * kappa
    d = -np.abs(F) ** 2
    return 18 * a * b * c * d - 4 * b ** 3 * d + b * b * c * c - 4 * a * c ** 3 - 27 * a * a * d * d


def amplitude_from_n(n: float, delta: float, K: float, kappa: float, F: float) -> complex:
    """alpha solving i(D + K n) alpha + (k/2) alpha = F."""
    return complex(F / (1j * (delta + K * n) + 0.5 * kappa))


def steady_states(sys: KerrSystem, qubit_state: str, omega_d: float, F: float) -> SteadyStateSolution:
    delta = sys.omega(qubit_state) - omega_d
    ns = photon_roots(delta, sys.K, sys.kappa, F)
    roots = []
    for n in ns:
        slope = cubic_slope(n / 1.0, delta / sys.kappa, sys.K / sys.kappa, 1.0)
        roots.append(SteadyRoot(float(n), amplitude_from_n(n, delta, sys.K, sys.kappa, F), bool(slope > 0)))
    return SteadyStateSolution(tuple(roots))


def bifurcation_threshold(sys: KerrSystem) -> tuple[float, float]:
    """(Delta_bif, n_bif) at the cusp: Delta = -sgn(K) sqrt(3) k/2, n = k/(sqrt(3)|K|)."""
    if sys.K == 0:
        raise ValueError("bifurcation requires a nonzero Kerr coefficient")
    delta = -np.sign(sys.K) * np.sqrt(3) * sys.kappa / 2
    n = sys.kappa / (np.sqrt(3) * abs(sys.K))
    return float(delta), float(n)


def bifurcation_drive(sys: KerrSystem) -> float:
    """Drive amplitude |F| at the cusp."""
    d, n = bifurcation_threshold(sys)
    return float(np.sqrt(cubic_value(n, d, sys.K, sys.kappa, 0.0)))


def bistability_map(sys: KerrSystem, qubit_state: str, omega_d_grid, F_grid) -> np.ndarray:
    """Boolean mask [i_F, i_wd] of drives with three positive steady states."""
    wd = np.asarray(omega_d_grid, dtype=float)
    F = np.asarray(F_grid, dtype=float)
    if sys.K == 0:
        return np.zeros((F.size, wd.size), bool)
    k = sys.kappa
    d = (sys.omega(qubit_state) - wd)[None, :] / k
    f = F[:, None] / k
    K = sys.K / k
    disc = _discriminant(d, K, 1.0, f)
    # three real roots are all positive only when K*D < 0 (sign pattern of the cubic)
    return (disc > 0) & (K * d < 0)


def swept_branch(sys: KerrSystem, qubit_state: str, omega_d_grid, F: float) -> np.ndarray:
    """Photon number along a drive-frequency sweep, following the branch
    continuously connected to the first grid point."""
    out = []
    prev = None
    for wd in omega_d_grid:
        stable = [r.n for r in steady_states(sys, qubit_state, wd, F).stable_roots()]
        n = stable[0] if prev is None else min(stable, key=lambda x: abs(x - prev))
        out.append(n)
        prev = n
    return np.array(out)


# --- transient dynamics -----------------------------------------------------

@dataclass(frozen=True)
class NoiseSpec:
    """Additive complex white noise with E|dxi|^2 = scale^2 (kappa/2) dt."""

    scale: float = 1.0


def kerr_drift(alpha, w_s, w_d, K, kappa, F):
    """d alpha/dt in angular units."""
    return -1j * (w_s - w_d) * alpha - 1j * K * (alpha.real ** 2 + alpha.imag ** 2) * alpha - 0.5 * kappa * alpha + F


def rk4_step(alpha, dt, w_s, w_d, K, kappa, F):
    k1 = kerr_drift(alpha, w_s, w_d, K, kappa, F)
    k2 = kerr_drift(alpha + 0.5 * dt * k1, w_s, w_d, K, kappa, F)
    k3 = kerr_drift(alpha + 0.5 * dt * k2, w_s, w_d, K, kappa, F)
    k4 = kerr_drift(alpha + dt * k3, w_s, w_d, K, kappa, F)
    return alpha + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)


def _drive_values(F, t_grid):
    if callable(F):
        return np.array([complex(F(t)) for t in t_grid])
    arr = np.asarray(F, dtype=complex)
    if arr.ndim == 0:
        return np.full(len(t_grid), complex(arr))
    if arr.shape != (len(t_grid),):
        raise ValueError("drive array must match t_grid")
    return arr


def integrate_transient(sys: KerrSystem, qubit_state: str, omega_d: float, F, t_grid,
                        noise: NoiseSpec | None = None, seed: int | None = None,
                        alpha0: complex = 0.0, max_dt: float = 0.1e-9) -> np.ndarray:
    """Complex amplitude on ``t_grid`` (s) under drive F(t) (Hz, held constant over each interval).

    Each grid interval is split into equal RK4 substeps no longer than
    ``max_dt``; noise increments are added once per substep.
    """
    t = np.asarray(t_grid, dtype=float)
    if t.ndim != 1 or t.size < 1 or np.any(np.diff(t) <= 0):
        raise ValueError("t_grid must be strictly increasing")
    Fv = 2 * np.pi * _drive_values(F, t)
    two_pi = 2 * np.pi
    w_s, w_d = two_pi * sys.omega(qubit_state), two_pi * omega_d
    K, kappa = two_pi * sys.K, two_pi * sys.kappa
    rng = np.random.default_rng(seed) if noise is not None else None
    out = np.empty(t.size, complex)
    a = complex(alpha0)
    out[0] = a
    for i in range(t.size - 1):
        h = t[i + 1] - t[i]
        m = max(1, int(np.ceil(h / max_dt - 1e-9)))
        dt = h / m
        for _ in range(m):
            a = rk4_step(a, dt, w_s, w_d, K, kappa, Fv[i])
            if rng is not None:
                z = rng.standard_normal(2)
                a += noise.scale * np.sqrt(kappa * dt / 4) * (z[0] + 1j * z[1])
        if not np.isfinite(a):
            raise FloatingPointError(f"integration diverged at t = {t[i + 1]:.6g} s")
        out[i + 1] = a
    return out
