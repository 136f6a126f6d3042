"""Circuit parameters, flux dependence, unit conversions and Hamiltonian assembly.

All energies are stored as linear frequencies E/h in Hz.  The Hamiltonian is

    H = 4 E_C (n_t - n_g)^2 - E_J(phi_t) cos(phi_t) + w_r a^dag a
        - E_Jc cos(phi_t - phi_r - 2 pi phi_b) + J n_t n_r

with the SQUID energy E_J(phi_t) of an asymmetric loop.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from . import hilbert
from .hilbert import BasisSpec

H_PLANCK = 6.62607015e-34
HBAR = H_PLANCK / (2 * np.pi)
E_CHARGE = 1.602176634e-19
PHI0_REDUCED = HBAR / (2 * E_CHARGE)  # hbar / 2e
R_Q = H_PLANCK / (2 * E_CHARGE) ** 2  # superconducting resistance quantum, ~6.45 kOhm


@dataclass(frozen=True)
class CircuitParams:
    """Hamiltonian parameters (energies in Hz, fluxes in flux quanta)."""

    E_C: float = 210e6
    E_J_sigma: float = 21.56e9
    d: float = 0.346
    E_Jc: float = 4.01e9
    J: float = 83e6
    omega_r_bare: float = 7.5616e9
    Z_r: float = 68.8
    n_g: float = 0.0
    phi_ext_t: float = 0.0
    phi_ext_b: float = 0.0

    def __post_init__(self):
        for name in ("E_C", "E_J_sigma", "omega_r_bare", "Z_r"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)!r}")
        for name in ("E_Jc", "J"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative, got {getattr(self, name)!r}")
        if not 0.0 <= self.d <= 1.0:
            raise ValueError(f"d must lie in [0, 1], got {self.d!r}")
        if not 0.0 <= self.n_g < 1.0:
            raise ValueError(f"n_g must lie in [0, 1), got {self.n_g!r}")

    def replace(self, **changes) -> "CircuitParams":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "CircuitParams":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise KeyError(f"unknown circuit field(s): {', '.join(sorted(unknown))}")
        return cls(**{k: float(v) for k, v in data.items()})

    @property
    def E_J(self) -> float:
        return squid_ej(self.E_J_sigma, self.d, self.phi_ext_t)

    @property
    def derived(self) -> "DerivedEnergies":
        return impedance_to_energies(self.Z_r, self.omega_r_bare, self.E_J)


@dataclass(frozen=True)
class DerivedEnergies:
    E_J_eff: float
    phi_zpf_r: float
    n_zpf_r: float
    E_Cr: float
    E_Lr: float


def squid_ej(E_J_sigma: float, d: float, phi_ext_t):
    """Effective Josephson energy of an asymmetric SQUID (positive branch).

    Written as sqrt(cos^2 + d^2 sin^2), which equals
    |cos(pi phi)| sqrt(1 + d^2 tan^2(pi phi)) and stays finite at half flux.
    """
    x = np.pi * np.asarray(phi_ext_t, dtype=float)
    ej = E_J_sigma * np.sqrt(np.cos(x) ** 2 + d * d * np.sin(x) ** 2)
    return float(ej) if np.ndim(ej) == 0 else ej


def impedance_to_energies(Z_r: float, omega_r_bare: float, E_J_eff: float = float("nan")) -> DerivedEnergies:
    """Lumped LC equivalent of a mode with impedance Z_r (Ohm) and frequency omega_r_bare (Hz).

    E_Cr = e^2/2C and E_Lr = (hbar/2e)^2/L in Hz, with C = 1/(w Z), L = Z/w,
    and phi_zpf = (2 E_Cr/E_Lr)^(1/4) = sqrt(pi Z_r / R_Q).
    """
    if Z_r <= 0 or omega_r_bare <= 0:
        raise ValueError("Z_r and omega_r_bare must be positive")
    w = 2 * np.pi * omega_r_bare
    C = 1.0 / (w * Z_r)
    L = Z_r / w
    E_Cr = E_CHARGE ** 2 / (2 * C) / H_PLANCK
    E_Lr = PHI0_REDUCED ** 2 / L / H_PLANCK
    phi_zpf = (2 * E_Cr / E_Lr) ** 0.25
    return DerivedEnergies(E_J_eff=E_J_eff, phi_zpf_r=phi_zpf, n_zpf_r=0.5 / phi_zpf, E_Cr=E_Cr, E_Lr=E_Lr)


def josephson_inductance(E_J: float) -> float:
    """Junction inductance (H) for a Josephson energy in Hz."""
    return PHI0_REDUCED ** 2 / (E_J * H_PLANCK)


def capacitances_to_couplings(C_t: float, C_r: float, C_c: float) -> tuple[float, float]:
    """Map lumped capacitances (F) to (E_C, J) in Hz.

    J = 4 e^2 C_c / beta, beta = C_t (C_r + C_c) + C_r C_c, E_C = e^2 / 2 C_tsum
    with C_tsum = C_t + (1/C_r + 1/C_c)^-1.
    """
    if C_t <= 0 or C_r <= 0 or C_c < 0:
        raise ValueError("capacitances must be positive")
    beta = C_t * (C_r + C_c) + C_r * C_c
    J = 4 * E_CHARGE ** 2 * C_c / beta / H_PLANCK
    C_series = 0.0 if C_c == 0 else 1.0 / (1.0 / C_r + 1.0 / C_c)
    C_tsum = C_t + C_series
    E_C = E_CHARGE ** 2 / (2 * C_tsum) / H_PLANCK
    return E_C, J


def couplings_to_capacitances(E_C: float, J: float, C_r: float) -> tuple[float, float, float]:
    """Invert capacitances_to_couplings for (C_t, C_c) given C_r.

    Returns (C_t, C_c, C_tsum).  Raises ValueError if no positive solution exists.
    """
    C_tsum = E_CHARGE ** 2 / (2 * E_C * H_PLANCK)
    if J == 0:
        return C_tsum, 0.0, C_tsum

    def mismatch(C_c):
        C_t = C_tsum - 1.0 / (1.0 / C_r + 1.0 / C_c)
        return capacitances_to_couplings(C_t, C_r, C_c)[1] - J

    hi = C_tsum * C_r / (C_r - C_tsum) if C_r > C_tsum else 1e3 * C_tsum
    hi *= 1 - 1e-12
    lo = 1e-9 * C_tsum
    if mismatch(lo) * mismatch(hi) > 0:
        raise ValueError("no capacitance network reproduces the requested (E_C, J)")
    C_c = brentq(mismatch, lo, hi, xtol=1e-30, rtol=1e-13)
    C_t = C_tsum - 1.0 / (1.0 / C_r + 1.0 / C_c)
    return C_t, C_c, C_tsum


# --- Hamiltonian assembly -------------------------------------------------

def transmon_hamiltonian(p: CircuitParams, spec: BasisSpec, include_coupler: bool = False) -> np.ndarray:
    """Single-mode transmon Hamiltonian in the charge basis (Hz)."""
    N = hilbert.charge_number_t(spec)
    cos_t, _ = hilbert.cos_sin_phi_t(spec)
    eye = np.eye(spec.n_charge)
    ht = 4 * p.E_C * (N - p.n_g * eye) @ (N - p.n_g * eye) - p.E_J * cos_t
    if include_coupler:
        ht = ht - p.E_Jc * cos_t
    return ht


def resonator_hamiltonian(p: CircuitParams, spec: BasisSpec) -> np.ndarray:
    a, ad = hilbert.fock_ladder(spec)
    return p.omega_r_bare * (ad @ a)


def _resonator_ops(p: CircuitParams, spec: BasisSpec):
    der = p.derived
    _, n_r = hilbert.resonator_quadratures(spec, der.phi_zpf_r, der.n_zpf_r)
    cos_r, sin_r = hilbert.cos_sin_phi_r(spec, der.phi_zpf_r)
    return cos_r, sin_r, n_r


def _is_integer_flux(x: float, tol: float = 1e-12) -> bool:
    return abs(x - round(x)) < tol


def interaction_pieces(p: CircuitParams, spec: BasisSpec) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(H_coscos, H_sinsin, H_nn) of the coupler at integer big-loop flux."""
    if not _is_integer_flux(p.phi_ext_b):
        raise ValueError("interaction decomposition is defined only at integer phi_ext_b")
    cos_t, sin_t = hilbert.cos_sin_phi_t(spec)
    n_t = hilbert.charge_number_t(spec)
    cos_r, sin_r, n_r = _resonator_ops(p, spec)
    h_cc = -p.E_Jc * np.kron(cos_t, cos_r)
    h_ss = -p.E_Jc * np.kron(sin_t, sin_r)
    h_nn = p.J * np.kron(n_t, n_r)
    return h_cc, h_ss, h_nn


def interaction_hamiltonian(p: CircuitParams, spec: BasisSpec) -> np.ndarray:
    """-E_Jc cos(phi_t - phi_r - 2 pi phi_b) + J n_t n_r for arbitrary phi_b."""
    cos_t, sin_t = hilbert.cos_sin_phi_t(spec)
    n_t = hilbert.charge_number_t(spec)
    cos_r, sin_r, n_r = _resonator_ops(p, spec)
    cd = np.kron(cos_t, cos_r) + np.kron(sin_t, sin_r)  # cos(phi_t - phi_r)
    sd = np.kron(sin_t, cos_r) - np.kron(cos_t, sin_r)  # sin(phi_t - phi_r)
    b = 2 * np.pi * p.phi_ext_b
    return -p.E_Jc * (np.cos(b) * cd + np.sin(b) * sd) + p.J * np.kron(n_t, n_r)


def bare_hamiltonian(p: CircuitParams, spec: BasisSpec) -> np.ndarray:
    """H_t + H_r on the product space."""
    ht = transmon_hamiltonian(p, spec)
    hr = resonator_hamiltonian(p, spec)
    return np.kron(ht, np.eye(spec.fock_cutoff)) + np.kron(np.eye(spec.n_charge), hr)


def assemble_hamiltonian(p: CircuitParams, spec: BasisSpec) -> np.ndarray:
    h = bare_hamiltonian(p, spec) + interaction_hamiltonian(p, spec)
    return 0.5 * (h + h.conj().T)
