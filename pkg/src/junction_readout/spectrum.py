"""Exact diagonalization, bare-state labeling and flux-dependent observables."""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from . import circuit, hilbert
from .circuit import CircuitParams
from .hilbert import BasisSpec

OVERLAP_THRESHOLD = 0.5


class LabelingError(RuntimeError):
    """A required dressed state could not be matched to its bare label."""


class RootNotFound(RuntimeError):
    """No sign change of the searched quantity inside the bracket."""


@dataclass
class LabeledSpectrum:
    energies: np.ndarray
    labels: list  # labels[k] = (j, n) of dressed state k, or None
    vectors: np.ndarray  # columns are dressed eigenvectors (product basis)
    overlaps: np.ndarray  # overlap of dressed state k with its labeled bare state
    params_snapshot: CircuitParams | None = None
    bare_transmon_vectors: np.ndarray | None = None
    _index: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self._index = {lab: k for k, lab in enumerate(self.labels) if lab is not None}

    def index(self, j: int, n: int) -> int:
        try:
            k = self._index[(j, n)]
        except KeyError:
            raise LabelingError(f"no dressed state carries label {(j, n)}") from None
        if self.overlaps[k] <= OVERLAP_THRESHOLD:
            raise LabelingError(
                f"state {(j, n)} unreliable: overlap {self.overlaps[k]:.3f} <= {OVERLAP_THRESHOLD}"
            )
        return k

    def energy(self, j: int, n: int) -> float:
        return float(self.energies[self.index(j, n)])

    def vector(self, j: int, n: int) -> np.ndarray:
        return self.vectors[:, self.index(j, n)]

    def unreliable(self, window: int | None = None) -> list:
        """Labels of dressed states (among the lowest ``window``) with overlap <= threshold."""
        ks = range(len(self.energies) if window is None else window)
        return [self.labels[k] for k in ks if self.overlaps[k] <= OVERLAP_THRESHOLD]


@dataclass(frozen=True)
class FluxObservables:
    phi: float
    omega_q: float
    alpha: float
    chi: float
    K_g: float
    K_e: float
    K_avg: float
    g_exchange: float
    g_tms: float
    omega_res_g: float
    omega_res_e: float

    @property
    def omega_r(self) -> float:
        return 0.5 * (self.omega_res_g + self.omega_res_e)

    CSV_FIELDS = ("phi", "omega_q", "alpha", "chi", "K_g", "K_e", "K_avg", "g_exchange", "g_tms")


def bare_transmon_states(p: CircuitParams, spec: BasisSpec, include_coupler: bool = True):
    """Eigenpairs of the transmon with the resonator phase held at zero.

    By default the coupler junction's -E_Jc cos(phi_t) is part of the qubit
    mode, as in a linearized-coupler (normal-mode) picture; pass
    ``include_coupler=False`` for the transmon alone.
    """
    return np.linalg.eigh(circuit.transmon_hamiltonian(p, spec, include_coupler=include_coupler))


def _greedy_labels(overlap: np.ndarray, bare_labels: list):
    """Assign each dressed column the bare row of maximal overlap, greedily and uniquely."""
    n_bare, n_dressed = overlap.shape
    order = np.argsort(-overlap, axis=None, kind="stable")
    labels = [None] * n_dressed
    best = np.zeros(n_dressed)
    used_b = np.zeros(n_bare, bool)
    used_d = np.zeros(n_dressed, bool)
    left = min(n_bare, n_dressed)
    for flat in order:
        b, k = divmod(int(flat), n_dressed)
        if used_b[b] or used_d[k]:
            continue
        used_b[b] = used_d[k] = True
        labels[k] = bare_labels[b]
        best[k] = overlap[b, k]
        left -= 1
        if left == 0:
            break
    return labels, best


def diagonalize_and_label(H: np.ndarray, spec: BasisSpec, p: CircuitParams | None = None,
                          transmon_vectors: np.ndarray | None = None) -> LabeledSpectrum:
    """Eigendecompose H and tag every dressed state with a bare (j, n) label.

    The bare basis is (transmon eigenstate j) x (Fock n).  The transmon
    eigenstates come from ``transmon_vectors`` if given, otherwise from
    ``bare_transmon_states(p)``; with neither, the charge basis itself is
    used (labels then index charge states, only useful for tests).
    """
    energies, vecs = np.linalg.eigh(H)
    if transmon_vectors is None and p is not None:
        _, transmon_vectors = bare_transmon_states(p, spec)
    if transmon_vectors is None:
        transmon_vectors = np.eye(spec.n_charge)
    nr = spec.fock_cutoff
    # amplitude <j, n | k> with the product basis reshaped (charge, fock)
    vr = vecs.reshape(spec.n_charge, nr, -1)
    amp = np.einsum("cj,cnk->jnk", transmon_vectors.conj(), vr)
    overlap = (np.abs(amp) ** 2).reshape(spec.n_charge * nr, -1)
    bare_labels = [(j, n) for j in range(spec.n_charge) for n in range(nr)]
    labels, best = _greedy_labels(overlap, bare_labels)
    return LabeledSpectrum(energies=energies, labels=labels, vectors=vecs, overlaps=best,
                           params_snapshot=p, bare_transmon_vectors=transmon_vectors)


def _signed(g: complex, ref: complex) -> float:
    """Gauge-invariant real version of a matrix element sharing the phase of ``ref``."""
    if ref == 0:
        return float(abs(g))
    return float((g * np.conj(ref)).imag / abs(ref))


def bare_matrix_elements(p: CircuitParams, spec: BasisSpec, H_int: np.ndarray | None = None,
                         include_coupler: bool = True):
    """Complex exchange and two-mode-squeezing elements between bare product states.

    Returns (g_exchange, g_tms, ref) where ref = <0_t|n_t|1_t> fixes a common
    phase: flipping the sign of either transmon eigenvector multiplies all
    three by the same factor, so g * conj(ref) is gauge invariant.
    """
    _, tv = bare_transmon_states(p, spec, include_coupler)
    if H_int is None:
        H_int = circuit.interaction_hamiltonian(p, spec)
    nr = spec.fock_cutoff
    fock = np.eye(nr)

    def ket(j, n):
        return np.kron(tv[:, j], fock[n])

    g_ex = ket(0, 1).conj() @ H_int @ ket(1, 0)
    g_tms = ket(0, 0).conj() @ H_int @ ket(1, 1)
    n_t = hilbert.charge_number_t(spec)
    ref = tv[:, 0].conj() @ n_t @ tv[:, 1]
    return complex(g_ex), complex(g_tms), complex(ref)


def observables_from_hamiltonian(H: np.ndarray, p: CircuitParams, spec: BasisSpec, H_int: np.ndarray | None = None) -> FluxObservables:
    ls = diagonalize_and_label(H, spec, p)
    E = {(j, n): ls.energy(j, n) for j in range(3) for n in range(3)}
    omega_q = E[1, 0] - E[0, 0]
    alpha = (E[2, 0] - E[1, 0]) - omega_q
    res_g = E[0, 1] - E[0, 0]
    res_e = E[1, 1] - E[1, 0]
    K_g = E[0, 2] - 2 * E[0, 1] + E[0, 0]
    K_e = E[1, 2] - 2 * E[1, 1] + E[1, 0]
    if H_int is None:
        H_int = H - circuit.bare_hamiltonian(p, spec)
    g_ex, g_tms, ref = bare_matrix_elements(p, spec, H_int)
    return FluxObservables(
        phi=p.phi_ext_t, omega_q=omega_q, alpha=alpha, chi=0.5 * (res_e - res_g),
        K_g=K_g, K_e=K_e, K_avg=0.5 * (K_g + K_e),
        g_exchange=_signed(g_ex, ref), g_tms=_signed(g_tms, ref),
        omega_res_g=res_g, omega_res_e=res_e,
    )


def observables_at_flux(p: CircuitParams, spec: BasisSpec = BasisSpec()) -> FluxObservables:
    H_int = circuit.interaction_hamiltonian(p, spec)
    H = circuit.bare_hamiltonian(p, spec) + H_int
    return observables_from_hamiltonian(H, p, spec, H_int)


def flux_sweep(p: CircuitParams, phis, spec: BasisSpec = BasisSpec(), threads: int = 1) -> list:
    """Observables at each flux; failed points are returned as None."""
    phis = [float(x) for x in phis]
    if any(b < a for a, b in zip(phis, phis[1:])):
        raise ValueError("flux grid must be monotone non-decreasing")

    def one(phi):
        try:
            return observables_at_flux(p.replace(phi_ext_t=phi), spec)
        except (LabelingError, np.linalg.LinAlgError):
            return None

    if threads <= 1:
        return [one(x) for x in phis]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(one, phis))


def signed_exchange(p: CircuitParams, spec: BasisSpec = BasisSpec(), include_coupler: bool = True) -> float:
    g_ex, _, ref = bare_matrix_elements(p, spec, include_coupler=include_coupler)
    return _signed(g_ex, ref)


def _bisect(f, lo: float, hi: float, xtol: float) -> float:
    flo, fhi = f(lo), f(hi)
    if flo == 0:
        return lo
    if fhi == 0:
        return hi
    if flo * fhi > 0:
        raise RootNotFound(f"no sign change in [{lo}, {hi}]")
    return brentq(f, lo, hi, xtol=xtol)


def find_balanced_flux(p: CircuitParams, bracket=(0.0, 0.5), spec: BasisSpec = BasisSpec(),
                       xtol: float = 1e-5, scan_points: int = 26, include_coupler: bool = True) -> float:
    """Flux where the single-excitation exchange element changes sign.

    The bracket is scanned first so that a root is found even when the
    endpoints alone do not straddle it.  ``include_coupler`` selects the
    bare qubit states as in ``bare_transmon_states``.
    """
    lo, hi = bracket
    f = lambda x: signed_exchange(p.replace(phi_ext_t=x), spec, include_coupler)
    grid = np.linspace(lo, hi, scan_points)
    vals = [f(x) for x in grid]
    for a, b, fa, fb in zip(grid, grid[1:], vals, vals[1:]):
        if fa == 0:
            return float(a)
        if fa * fb < 0:
            return float(_bisect(f, a, b, xtol))
    if vals[-1] == 0:
        return float(grid[-1])
    raise RootNotFound(f"exchange element keeps its sign over [{lo}, {hi}]")


def cross_kerr_decomposition(p: CircuitParams, spec: BasisSpec = BasisSpec()) -> tuple[float, float, float]:
    """chi from the full coupling, from cos*cos alone, and from sin*sin + n*n alone."""
    h0 = circuit.bare_hamiltonian(p, spec)
    h_cc, h_ss, h_nn = circuit.interaction_pieces(p, spec)
    chi_total = observables_from_hamiltonian(h0 + h_cc + h_ss + h_nn, p, spec, h_cc + h_ss + h_nn).chi
    # without a coupler junction the cos*cos piece vanishes identically
    chi_cc = observables_from_hamiltonian(h0 + h_cc, p, spec, h_cc).chi if p.E_Jc != 0 else 0.0
    chi_tr = observables_from_hamiltonian(h0 + h_ss + h_nn, p, spec, h_ss + h_nn).chi
    return chi_total, chi_cc, chi_tr


def write_sweep_csv(rows, path_or_file):
    """CSV with the fixed column set; missing points written as nan."""
    lines = [",".join(FluxObservables.CSV_FIELDS)]
    for r in rows:
        if r is None:
            lines.append(",".join(["nan"] * len(FluxObservables.CSV_FIELDS)))
            continue
        lines.append(",".join(format_number(getattr(r, k)) for k in FluxObservables.CSV_FIELDS))
    text = "\n".join(lines) + "\n"
    if hasattr(path_or_file, "write"):
        path_or_file.write(text)
    else:
        with open(path_or_file, "w", newline="") as fh:
            fh.write(text)
    return text


def format_number(x: float) -> str:
    x = float(x)
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    if math.isnan(x):
        return "nan"
    return repr(float(f"{x:.12g}"))
