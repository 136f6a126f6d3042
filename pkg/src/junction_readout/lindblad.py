"""Purcell lifetimes from a loss-only master equation in the dressed basis."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import expm
from scipy.optimize import curve_fit, minimize_scalar

from . import circuit, hilbert, spectrum
from .circuit import CircuitParams
from .hilbert import BasisSpec
from .spectrum import LabeledSpectrum

TRACE_TOL = 1e-8
POSITIVITY_TOL = 1e-8
RESIDUAL_FLAG = 0.05


class IntegrationFailure(RuntimeError):
    def __init__(self, message: str, time: float | None = None):
        super().__init__(message if time is None else f"{message} (t = {time:.6g} s)")
        self.time = time


@dataclass
class LindbladRun:
    """Master-equation problem; H in Hz, kappa as kappa/2pi in Hz, times in s."""

    H: np.ndarray
    c_op: np.ndarray
    rho0: np.ndarray
    t_grid: np.ndarray
    kappa: float

    def __post_init__(self):
        self.H = np.asarray(self.H, dtype=complex)
        self.c_op = np.asarray(self.c_op, dtype=complex)
        self.rho0 = np.asarray(self.rho0, dtype=complex)
        self.t_grid = np.asarray(self.t_grid, dtype=float)
        if abs(np.trace(self.rho0) - 1) > 1e-10:
            raise ValueError("rho0 must have unit trace")
        if not np.allclose(self.rho0, self.rho0.conj().T, atol=1e-12):
            raise ValueError("rho0 must be Hermitian")
        if np.linalg.eigvalsh(self.rho0).min() < -1e-12:
            raise ValueError("rho0 must be positive semidefinite")
        if np.any(np.diff(self.t_grid) < 0):
            raise ValueError("t_grid must be sorted")


@dataclass
class DecayFit:
    T1_pl: float
    residual: float
    population_trace: list
    non_exponential: bool = False


def dressed_collapse_operator(ls: LabeledSpectrum, n_keep: int | None = None, spec: BasisSpec | None = None) -> np.ndarray:
    """sum over E_l' >= E_l of <l| a + a^dag |l'> |l><l'| among the lowest ``n_keep`` dressed states."""
    n_charge = ls.bare_transmon_vectors.shape[0]
    nr = ls.vectors.shape[0] // n_charge
    if spec is not None:
        nr = spec.fock_cutoff
    a = np.diag(np.sqrt(np.arange(1, nr, dtype=float)), 1)
    x = np.kron(np.eye(n_charge), a + a.T)
    v = ls.vectors if n_keep is None else ls.vectors[:, :n_keep]
    xd = v.conj().T @ x @ v
    # energies are sorted ascending, so "loss only" is the upper triangle
    return np.triu(xd)


def liouvillian(H: np.ndarray, c_op: np.ndarray, kappa: float) -> np.ndarray:
    """Superoperator acting on column-stacked rho, angular units (s^-1)."""
    d = H.shape[0]
    eye = np.eye(d)
    h = 2 * np.pi * H
    k = 2 * np.pi * kappa
    cdc = c_op.conj().T @ c_op
    L = -1j * (np.kron(eye, h) - np.kron(h.T, eye))
    L += k * (np.kron(c_op.conj(), c_op) - 0.5 * np.kron(eye, cdc) - 0.5 * np.kron(cdc.T, eye))
    return L


def _propagators(run: LindbladRun, L: np.ndarray, t0: float):
    """exp(L (t - t0)) for each snapshot.

    For a diagonal H whose commutator superoperator commutes with the
    dissipator, the fast phases are applied analytically so that long
    windows keep full precision.
    """
    d = run.H.shape[0]
    h = 2 * np.pi * run.H
    if np.count_nonzero(h - np.diag(np.diag(h))) == 0:
        lh = -1j * (np.kron(np.ones(d), np.diag(h)) - np.kron(np.diag(h), np.ones(d)))
        LD = L - np.diag(lh)
        comm = lh[:, None] * LD - LD * lh[None, :]
        if np.abs(comm).max() <= 1e-12 * max(np.abs(lh).max(), 1.0) * max(np.abs(LD).max(), 1.0):
            return [np.exp(lh * (t - t0))[:, None] * expm(LD * (t - t0)) for t in run.t_grid]
    return [expm(L * (t - t0)) for t in run.t_grid]


def _check_state(rho: np.ndarray, t: float):
    tr = np.trace(rho).real
    if abs(tr - 1) > TRACE_TOL:
        raise IntegrationFailure(f"trace drifted to {tr!r}", t)
    herm = 0.5 * (rho + rho.conj().T)
    if np.linalg.eigvalsh(herm).min() < -POSITIVITY_TOL:
        raise IntegrationFailure("density matrix lost positivity", t)


def evolve(run: LindbladRun, method: str = "rk", rtol: float = 1e-10, atol: float = 1e-12,
           max_step: float = np.inf) -> list:
    """Density matrices at every time of ``run.t_grid``.

    ``method="rk"`` integrates with an adaptive Dormand-Prince 8(5,3) scheme;
    ``method="expm"`` propagates with the exact Liouvillian exponential.
    """
    d = run.H.shape[0]
    L = liouvillian(run.H, run.c_op, run.kappa)
    v0 = run.rho0.reshape(-1, order="F")
    t0 = float(run.t_grid[0])
    if method == "expm":
        out = [(prop @ v0).reshape(d, d, order="F") for prop in _propagators(run, L, t0)]
    elif method == "rk":
        if run.t_grid[-1] == t0:
            out = [run.rho0.copy() for _ in run.t_grid]
        else:
            sol = solve_ivp(lambda t, y: L @ y, (t0, float(run.t_grid[-1])), v0, method="DOP853",
                            t_eval=run.t_grid, rtol=rtol, atol=atol, max_step=max_step)
            if not sol.success:
                raise IntegrationFailure(sol.message, float(sol.t[-1]) if sol.t.size else t0)
            out = [sol.y[:, k].reshape(d, d, order="F") for k in range(sol.y.shape[1])]
    else:
        raise ValueError(f"unknown method {method!r}")
    for t, rho in zip(run.t_grid, out):
        _check_state(rho, float(t))
    return out


def decay_time_grid(T1_estimate: float, n: int = 60) -> np.ndarray:
    """t = 0 followed by log-spaced times up to 5 T1_estimate."""
    end = 5 * T1_estimate
    return np.concatenate([[0.0], np.geomspace(end * 1e-3, end, n - 1)])


def fit_exponential_decay(t, pop, T1_guess: float) -> tuple[float, float]:
    t = np.asarray(t, float)
    pop = np.asarray(pop, float)
    (T1,), _ = curve_fit(lambda x, T: np.exp(-x / T), t, pop, p0=[T1_guess],
                         bounds=(T1_guess * 1e-6, T1_guess * 1e6))
    resid = float(np.sqrt(np.mean((pop - np.exp(-t / T1)) ** 2)))
    return float(T1), resid


def purcell_T1(p: CircuitParams, spec: BasisSpec = BasisSpec(12, 4), kappa: float = 10.6e6,
               method: str = "expm", max_step: float = np.inf, n_keep: int | None = None) -> DecayFit:
    """Fit the decay of the dressed qubit excitation |e,0> under resonator loss.

    Loss-only dynamics started in |e,0> populates only states below it, so
    the simulation keeps the dressed states up to and including |e,0> (or
    the lowest ``n_keep`` if that is larger).  Coherences to higher states
    would feed back only at order kappa/omega.

    Windows reach milliseconds while coherences rotate at GHz, which makes
    explicit integration stiff; the exact propagator is the default and
    ``method="rk"`` is meant for short windows.
    """
    H = circuit.assemble_hamiltonian(p, spec)
    ls = spectrum.diagonalize_and_label(H, spec, p)
    k_e = ls.index(1, 0)
    ls.index(0, 0)
    m = max(k_e + 1, n_keep or 0)
    c = dressed_collapse_operator(ls, m, spec)
    energies = ls.energies[:m] - ls.energies[0]
    Hd = np.diag(energies).astype(complex)
    rate_est = 2 * np.pi * kappa * float(np.sum(np.abs(c[:, k_e]) ** 2))
    if rate_est <= 0:
        return DecayFit(np.inf, 0.0, [], False)
    T1_est = 1.0 / rate_est
    t = decay_time_grid(T1_est)
    rho0 = np.zeros((m, m), complex)
    rho0[k_e, k_e] = 1
    states = evolve(LindbladRun(Hd, c, rho0, t, kappa), method=method, max_step=max_step)
    pop = np.array([r[k_e, k_e].real for r in states])
    T1, resid = fit_exponential_decay(t, pop, T1_est)
    return DecayFit(T1, resid, list(zip(t.tolist(), pop.tolist())), resid > RESIDUAL_FLAG)


def lifetime_peak(p: CircuitParams, band=(0.0, 0.5), spec: BasisSpec = BasisSpec(12, 4), kappa: float = 10.6e6,
                  scan_points: int = 21) -> tuple[float, DecayFit]:
    """Flux of maximal numeric T1 inside ``band``: coarse scan, then bounded refinement of log T1."""
    grid = np.linspace(band[0], band[1], scan_points)
    t1 = [purcell_T1(p.replace(phi_ext_t=x), spec, kappa).T1_pl for x in grid]
    k = int(np.argmax(t1))
    lo, hi = grid[max(k - 1, 0)], grid[min(k + 1, scan_points - 1)]
    cost = lambda x: -np.log(purcell_T1(p.replace(phi_ext_t=x), spec, kappa).T1_pl)
    res = minimize_scalar(cost, bounds=(lo, hi), method="bounded", options={"xatol": 1e-6})
    phi = float(res.x) if -res.fun > np.log(t1[k]) else float(grid[k])
    return phi, purcell_T1(p.replace(phi_ext_t=phi), spec, kappa)
