"""Truncated operator matrices for the transmon charge basis and resonator Fock basis.

Operators are plain dense numpy arrays. Transmon operators act on the
charge states ``n = -n_c ... n_c`` (index ``k`` holds charge ``k - n_c``),
resonator operators on Fock levels ``0 ... N_r - 1``.  Products of the two
spaces are ordered transmon-major, i.e. ``kron(transmon_op, resonator_op)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cosm, sinm

# extra Fock levels used when exponentiating resonator quadratures, so that
# the cropped cos/sin matrices are not polluted by the truncation edge
_FOCK_PAD = 24


@dataclass(frozen=True)
class BasisSpec:
    """Truncation of the two-mode Hilbert space."""

    charge_cutoff: int = 20
    fock_cutoff: int = 8

    def __post_init__(self):
        if int(self.charge_cutoff) != self.charge_cutoff or self.charge_cutoff < 5:
            raise ValueError(f"charge_cutoff must be an integer >= 5, got {self.charge_cutoff}")
        if int(self.fock_cutoff) != self.fock_cutoff or self.fock_cutoff < 3:
            raise ValueError(f"fock_cutoff must be an integer >= 3, got {self.fock_cutoff}")

    @property
    def n_charge(self) -> int:
        return 2 * self.charge_cutoff + 1

    @property
    def dim(self) -> int:
        return self.n_charge * self.fock_cutoff


def _freeze(m: np.ndarray) -> np.ndarray:
    m.setflags(write=False)
    return m


def charge_number_t(spec: BasisSpec) -> np.ndarray:
    """Diagonal transmon charge operator with entries -n_c ... n_c."""
    n = np.arange(-spec.charge_cutoff, spec.charge_cutoff + 1, dtype=float)
    return _freeze(np.diag(n).astype(complex))


def charge_raising(spec: BasisSpec) -> np.ndarray:
    """e^{i phi_t} = sum_n |n+1><n| on the charge ladder (truncated at the edges)."""
    return _freeze(np.diag(np.ones(spec.n_charge - 1), -1).astype(complex))


def cos_sin_phi_t(spec: BasisSpec) -> tuple[np.ndarray, np.ndarray]:
    """cos(phi_t) and sin(phi_t) as band matrices in the charge basis."""
    u = charge_raising(spec)
    cos = 0.5 * (u + u.conj().T)
    sin = (u - u.conj().T) / 2j
    return _freeze(cos), _freeze(sin)


def _ladder(n_levels: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, n_levels, dtype=float)), 1).astype(complex)


def fock_ladder(spec: BasisSpec) -> tuple[np.ndarray, np.ndarray]:
    """Annihilation and creation operators truncated to ``fock_cutoff`` levels."""
    a = _ladder(spec.fock_cutoff)
    return _freeze(a), _freeze(a.conj().T.copy())


def _check_zpf(phi_zpf: float, n_zpf: float):
    if phi_zpf <= 0 or n_zpf <= 0:
        raise ValueError("zero-point amplitudes must be positive")
    if abs(phi_zpf * n_zpf - 0.5) > 1e-9:
        raise ValueError(
            f"inconsistent zero-point pair: phi_zpf*n_zpf = {phi_zpf * n_zpf!r}, expected 0.5"
        )


def resonator_quadratures(spec: BasisSpec, phi_zpf: float, n_zpf: float) -> tuple[np.ndarray, np.ndarray]:
    """Resonator phase and charge, phi_r = phi_zpf (a + a^dag), n_r = i n_zpf (a^dag - a)."""
    _check_zpf(phi_zpf, n_zpf)
    a, ad = fock_ladder(spec)
    phi = phi_zpf * (a + ad)
    n = 1j * n_zpf * (ad - a)
    return _freeze(phi), _freeze(n)


def cos_sin_phi_r(spec: BasisSpec, phi_zpf: float) -> tuple[np.ndarray, np.ndarray]:
    """cos(phi_r) and sin(phi_r), exponentiated in a padded Fock space then cropped."""
    big = spec.fock_cutoff + _FOCK_PAD
    a = _ladder(big)
    phi = phi_zpf * (a + a.conj().T)
    k = spec.fock_cutoff
    cos = cosm(phi)[:k, :k]
    sin = sinm(phi)[:k, :k]
    # phi is real symmetric, so both functions are real symmetric
    cos = 0.5 * (cos + cos.conj().T)
    sin = 0.5 * (sin + sin.conj().T)
    return _freeze(cos.astype(complex)), _freeze(sin.astype(complex))


def kron(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return _freeze(np.kron(a, b))


def identity_t(spec: BasisSpec) -> np.ndarray:
    return _freeze(np.eye(spec.n_charge, dtype=complex))


def identity_r(spec: BasisSpec) -> np.ndarray:
    return _freeze(np.eye(spec.fock_cutoff, dtype=complex))


def is_hermitian(m: np.ndarray, rtol: float = 1e-12) -> bool:
    scale = max(np.linalg.norm(m), 1e-300)
    return bool(np.linalg.norm(m - m.conj().T) <= rtol * scale)
