"""Perturbative dispersive couplings, analytic Purcell rate, notch frequency and
the lumped-admittance Purcell cross-check."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from . import circuit, hilbert, spectrum
from .circuit import CircuitParams, H_PLANCK
from .hilbert import BasisSpec

MIN_DENOMINATOR = 1e6  # Hz


class DispersiveBreakdown(RuntimeError):
    """An energy denominator is too small for perturbation theory."""


class NonDispersiveWarning(UserWarning):
    """Coupling elements are not small compared with the detunings."""


class NotchNotFound(RuntimeError):
    """The Purcell bracket keeps its sign across the searched flux band."""


@dataclass(frozen=True)
class SWCouplings:
    g: np.ndarray  # g[i, j] = <i|B|j>, Hz
    omega_bare: np.ndarray  # transmon level energies relative to ground, Hz
    omega_r: float


def sw_couplings(p: CircuitParams, n_levels: int = 6, spec: BasisSpec = BasisSpec(20, 3)) -> SWCouplings:
    """Couplings g_ij = <i|B|j> with B = -E_Jc phi_zpf sin(phi_t) + i J n_zpf n_t.

    Transmon states are eigenstates of the transmon alone, without the
    coupler junction's static cos(phi_t) term.
    """
    if not 1 <= n_levels <= 8:
        raise ValueError("n_levels must be between 1 and 8")
    der = p.derived
    _, sin_t = hilbert.cos_sin_phi_t(spec)
    n_t = hilbert.charge_number_t(spec)
    B = -p.E_Jc * der.phi_zpf_r * sin_t + 1j * p.J * der.n_zpf_r * n_t
    e, v = spectrum.bare_transmon_states(p, spec, include_coupler=False)
    v = v[:, :n_levels]
    g = v.conj().T @ B @ v
    return SWCouplings(g=g, omega_bare=e[:n_levels] - e[0], omega_r=p.omega_r_bare)


def chi_ij(sw: SWCouplings, i: int, j: int) -> float:
    """|g_ij|^2 / (w_j - w_i - w_r): shift of level j per photon from its coupling to level i."""
    g2 = abs(sw.g[i, j]) ** 2
    if g2 == 0.0:
        return 0.0
    den = sw.omega_bare[j] - sw.omega_bare[i] - sw.omega_r
    if abs(den) < MIN_DENOMINATOR:
        raise DispersiveBreakdown(f"denominator {den:.3g} Hz for levels ({i}, {j})")
    return g2 / den


def chi_level(sw: SWCouplings, j: int) -> float:
    """Per-photon shift chi_j = sum_i (chi_ij - chi_ji) of transmon level j."""
    return sum(chi_ij(sw, i, j) - chi_ij(sw, j, i) for i in range(len(sw.omega_bare)) if i != j)


def chi_x_approx(sw: SWCouplings) -> float:
    """Qubit cross-Kerr (chi_1 - chi_0)/2 keeping only the 0<->1 and 1<->2 couplings.

    Co-rotating part chi_01 - chi_12/2, counter-rotating part chi_21/2 - chi_10.
    """
    co = chi_ij(sw, 0, 1) - 0.5 * chi_ij(sw, 1, 2)
    counter = 0.5 * chi_ij(sw, 2, 1) - chi_ij(sw, 1, 0)
    return co + counter


def corotating_and_counter(sw: SWCouplings) -> tuple[float, float]:
    co = chi_ij(sw, 0, 1) - 0.5 * chi_ij(sw, 1, 2)
    counter = 0.5 * chi_ij(sw, 2, 1) - chi_ij(sw, 1, 0)
    return co, counter


# --- analytic Purcell rate ------------------------------------------------

def dispersive_margin(obs) -> float:
    """Smallest ratio of detuning to the matching coupling element (inf when uncoupled)."""
    wq, wr = obs.omega_q, obs.omega_r
    r1 = abs(wr - wq) / abs(obs.g_exchange) if obs.g_exchange else np.inf
    r2 = (wr + wq) / abs(obs.g_tms) if obs.g_tms else np.inf
    return min(r1, r2)


def bracket_cancellation(obs) -> float:
    """|a1 + a2| / (|a1| + |a2|) for the two Purcell amplitudes; 1 without cancellation, 0 at the notch."""
    a1 = obs.g_exchange / (obs.omega_r - obs.omega_q)
    a2 = obs.g_tms / (obs.omega_r + obs.omega_q)
    den = abs(a1) + abs(a2)
    return abs(a1 + a2) / den if den else 1.0


def purcell_bracket(p: CircuitParams, spec: BasisSpec = BasisSpec(), obs=None) -> tuple[float, float, float]:
    """Signed Purcell amplitude g_ex/(w_r - w_q) + g_tms/(w_r + w_q) (dimensionless).

    Returns (bracket, omega_q, omega_r) with dressed frequencies.  A margin
    below 10 (see ``dispersive_margin``) is flagged with a warning; a
    detuning under MIN_DENOMINATOR raises.
    """
    if obs is None:
        obs = spectrum.observables_at_flux(p, spec)
    wq, wr = obs.omega_q, obs.omega_r
    if abs(wr - wq) < MIN_DENOMINATOR:
        raise DispersiveBreakdown(f"qubit within {abs(wr - wq):.3g} Hz of the resonator")
    if dispersive_margin(obs) < 10:
        warnings.warn(
            f"couplings ({obs.g_exchange:.3g}, {obs.g_tms:.3g}) Hz not small against detunings "
            f"({wr - wq:.3g}, {wr + wq:.3g}) Hz", NonDispersiveWarning, stacklevel=2)
    return obs.g_exchange / (wr - wq) + obs.g_tms / (wr + wq), wq, wr


def purcell_rate_analytic(p: CircuitParams, spec: BasisSpec = BasisSpec(), kappa: float = 10.6e6, obs=None) -> float:
    """Purcell decay rate 1/T1 in s^-1; ``kappa`` is the linewidth kappa/2pi in Hz."""
    b, _, _ = purcell_bracket(p, spec, obs)
    return 2 * np.pi * kappa * b * b


def find_notch_flux(p: CircuitParams, spec: BasisSpec = BasisSpec(), band=(0.0, 0.5), scan_points: int = 26,
                    xtol: float = 1e-5) -> float:
    """Flux at which the Purcell bracket changes sign."""
    f = lambda x: purcell_bracket(p.replace(phi_ext_t=x), spec)[0]
    grid = np.linspace(band[0], band[1], scan_points)
    vals = [f(x) for x in grid]
    for a, b, fa, fb in zip(grid, grid[1:], vals, vals[1:]):
        if fa == 0:
            return float(a)
        if fa * fb < 0:
            return float(brentq(f, a, b, xtol=xtol))
    raise NotchNotFound(f"no Purcell cancellation for flux in [{band[0]}, {band[1]}]")


def notch_frequency(p: CircuitParams, spec: BasisSpec = BasisSpec(), C_c: float | None = None,
                    band=(0.0, 0.5)) -> float:
    """Notch frequency in Hz.

    With ``C_c`` given, the LC resonance 1/(2 pi sqrt(L_Jc C_c)) of the coupler.
    Otherwise the qubit frequency at which the Purcell bracket vanishes.
    """
    if p.E_Jc <= 0:
        raise ValueError("notch requires a coupling junction (E_Jc > 0)")
    if C_c is not None:
        L = circuit.josephson_inductance(p.E_Jc)
        return 1.0 / (2 * np.pi * np.sqrt(L * C_c))
    phi = find_notch_flux(p, spec, band)
    return spectrum.observables_at_flux(p.replace(phi_ext_t=phi), spec).omega_q


# --- lumped admittance ------------------------------------------------------

@dataclass(frozen=True)
class LumpedNetwork:
    L_Jc: float
    C_c: float
    L_r: float
    C_r: float
    R_load: float


@dataclass(frozen=True)
class LumpedModel:
    network: LumpedNetwork
    C_t: float
    C_t_sigma: float


def lumped_model(p: CircuitParams, kappa: float = 10.6e6, omega_r: float | None = None) -> LumpedModel:
    """Lumped circuit consistent with (E_C, J, E_Jc, Z_r, w_r) and a tank loss matching kappa.

    The tank resistance is R = 1/(2 pi kappa C_r), a surrogate for the feedline.
    """
    w = 2 * np.pi * (p.omega_r_bare if omega_r is None else omega_r)
    C_r = 1.0 / (w * p.Z_r)
    L_r = p.Z_r / w
    C_t, C_c, C_ts = circuit.couplings_to_capacitances(p.E_C, p.J, C_r)
    L_Jc = circuit.josephson_inductance(p.E_Jc) if p.E_Jc > 0 else np.inf
    R = 1.0 / (2 * np.pi * kappa * C_r)
    return LumpedModel(LumpedNetwork(L_Jc, C_c, L_r, C_r, R), C_t, C_ts)


def input_admittance(net: LumpedNetwork, omega) -> np.ndarray:
    """Admittance (S) seen from the qubit node at linear frequency ``omega`` (Hz)."""
    w = 2 * np.pi * np.atleast_1d(np.asarray(omega, dtype=float))
    with np.errstate(divide="ignore", invalid="ignore"):
        y_c = 1j * w * net.C_c + (0 if np.isinf(net.L_Jc) else 1.0 / (1j * w * net.L_Jc))
        y_tank = 1.0 / net.R_load + 1j * w * net.C_r + 1.0 / (1j * w * net.L_r)
        z = 1.0 / y_c + 1.0 / y_tank
        y = np.where(np.isfinite(z), 1.0 / z, 0.0)
    return y if np.ndim(omega) else y[0]


def purcell_rate_admittance(network: LumpedNetwork, omega_q, C_t_sigma: float):
    """Re Y_in(w_q) / C_tsum in s^-1."""
    rate = np.real(input_admittance(network, omega_q)) / C_t_sigma
    rate = np.maximum(rate, 0.0)
    return float(rate) if np.ndim(rate) == 0 else rate
