import numpy as np
import pytest

from junction_readout import circuit, hilbert
from junction_readout.circuit import CircuitParams, squid_ej
from junction_readout.hilbert import BasisSpec

SPEC = BasisSpec(8, 4)


def test_params_validation():
    with pytest.raises(ValueError):
        CircuitParams(E_C=-1)
    with pytest.raises(ValueError):
        CircuitParams(d=1.5)
    with pytest.raises(ValueError):
        CircuitParams(n_g=1.0)
    with pytest.raises(KeyError):
        CircuitParams.from_dict({"E_Jx": 1.0})
    p = CircuitParams()
    assert CircuitParams.from_dict(p.to_dict()) == p


def test_squid_energy_limits():
    assert squid_ej(21.56e9, 0.346, 0.0) == pytest.approx(21.56e9)
    assert squid_ej(21.56e9, 0.346, 0.5) == pytest.approx(0.346 * 21.56e9)
    quarter = 21.56e9 * np.cos(np.pi / 4) * np.sqrt(1 + 0.346 ** 2)
    assert squid_ej(21.56e9, 0.346, 0.25) == pytest.approx(quarter, rel=1e-12)
    assert squid_ej(21.56e9, 0.346, 0.25) / 1e9 == pytest.approx(16.13, abs=0.01)
    phis = np.linspace(0, 1, 101)
    assert np.all(squid_ej(21.56e9, 0.346, phis) > 0)


def test_zero_point_scaling_with_impedance():
    a = circuit.impedance_to_energies(50.0, 7e9)
    b = circuit.impedance_to_energies(100.0, 7e9)
    assert b.phi_zpf_r / a.phi_zpf_r == pytest.approx(np.sqrt(2))
    assert a.n_zpf_r == pytest.approx(1 / (2 * a.phi_zpf_r))


def test_capacitance_couplings():
    E_C, J = circuit.capacitances_to_couplings(80e-15, 300e-15, 0.0)
    assert J == 0
    _, J1 = circuit.capacitances_to_couplings(80e-15, 80e-15, 5e-15)
    _, J2 = circuit.capacitances_to_couplings(80e-15, 80e-15, 5e-15)
    assert J1 == J2
    # series limit: huge coupling capacitor merges the two islands
    E_big, _ = circuit.capacitances_to_couplings(80e-15, 300e-15, 1e-6)
    e = 1.602176634e-19
    assert E_big == pytest.approx(e * e / (2 * 380e-15) / circuit.H_PLANCK, rel=1e-6)


def test_capacitance_round_trip():
    C_r = 1 / (2 * np.pi * 7.56e9 * 68.8)
    C_t, C_c, _ = circuit.couplings_to_capacitances(210e6, 83e6, C_r)
    E_C, J = circuit.capacitances_to_couplings(C_t, C_r, C_c)
    assert E_C == pytest.approx(210e6, rel=1e-8) and J == pytest.approx(83e6, rel=1e-8)


def test_hamiltonian_hermitian_and_sized(params):
    H = circuit.assemble_hamiltonian(params, SPEC)
    assert H.shape == (SPEC.dim, SPEC.dim)
    assert hilbert.is_hermitian(H)


def test_decoupled_spectrum_is_direct_sum(params):
    p = params.replace(E_Jc=0.0, J=0.0)
    H = circuit.assemble_hamiltonian(p, SPEC)
    et = np.linalg.eigvalsh(circuit.transmon_hamiltonian(p, SPEC))
    er = np.arange(SPEC.fock_cutoff) * p.omega_r_bare
    expect = np.sort((et[:, None] + er[None, :]).ravel())
    assert np.allclose(np.linalg.eigvalsh(H), expect, rtol=0, atol=1e-3)


def test_interaction_matches_pieces_at_zero_bias(params):
    full = circuit.interaction_hamiltonian(params, SPEC)
    assert np.allclose(full, sum(circuit.interaction_pieces(params, SPEC)), atol=1e-3)


def test_interaction_bias_identity(params):
    # cos(x - 2 pi b) = cos(2 pi b) cos x + sin(2 pi b) sin x
    b = 0.13
    p = params.replace(phi_ext_b=b, J=0.0)
    p0 = params.replace(J=0.0)
    h_b = circuit.interaction_hamiltonian(p, SPEC)
    h_cc, h_ss, _ = circuit.interaction_pieces(p0, SPEC)
    spec = SPEC
    ct, st = hilbert.cos_sin_phi_t(spec)
    cr, sr = hilbert.cos_sin_phi_r(spec, p.derived.phi_zpf_r)
    sin_diff = np.kron(st, cr) - np.kron(ct, sr)
    expect = np.cos(2 * np.pi * b) * (h_cc + h_ss) - p.E_Jc * np.sin(2 * np.pi * b) * sin_diff
    assert np.allclose(h_b, expect, atol=1e-3)


def test_piece_limits(params):
    h_cc, h_ss, h_nn = circuit.interaction_pieces(params.replace(E_Jc=0.0), SPEC)
    assert not h_cc.any() and not h_ss.any() and h_nn.any()
    _, _, h_nn = circuit.interaction_pieces(params.replace(J=0.0), SPEC)
    assert not h_nn.any()
