import numpy as np
import pytest

from junction_readout import semiclassical as sc
from junction_readout.semiclassical import KerrSystem, LineModel, NoiseSpec
from oracles import cubic_roots_by_scan


def test_line_validation():
    with pytest.raises(ValueError):
        LineModel(C_in=-1e-15)
    with pytest.raises(ValueError):
        LineModel(attenuation_A=0.5)


def test_effective_line_limits():
    k, w, g = sc.effective_line(LineModel(C_in=0.0), 7.6e9)
    assert g == 1 and k == 21.2e6 and w == 7.659e9
    k, w, g = sc.effective_line(LineModel(C_in=1e-6), 7.6e9)
    assert abs(g) < 1e-6 and k == pytest.approx(10.6e6, rel=1e-5)
    k, w, g = sc.effective_line(LineModel(C_in=0.3e-12), 7.6e9)
    assert g.imag < 0 and w < 7.659e9 and 10.6e6 < k < 21.2e6


def test_effective_kappa_monotone_in_coupling_capacitor():
    ks = [sc.effective_line(LineModel(C_in=c), 7.6e9)[0] for c in np.linspace(0, 2e-12, 9)]
    assert np.all(np.diff(ks) < 0)


def test_power_to_drive_scales_as_root_power():
    line = LineModel(C_in=0.3e-12, attenuation_A=1e6)
    f1 = sc.power_to_drive(line, 1e-12, 7.6e9)
    assert sc.power_to_drive(line, 4e-12, 7.6e9) == pytest.approx(2 * f1)
    assert sc.power_to_drive(LineModel(attenuation_A=1e6, C_in=0.3e-12), 1e-12, 7.6e9) == f1


def test_s21_extinction_and_far_limit():
    line = LineModel(C_in=0.0)
    assert abs(sc.s21(line, 10e6, 7.6e9, 7.6e9)) < 1e-15
    # Gamma = 1 without an input capacitor, so the (1 - Gamma) factor closes the line
    assert not sc.s21(line, 10e6, 7.6e9, np.array([7.0e9, 8.0e9])).any()
    # with a real reflection coefficient the bracket tends to one away from resonance
    lc = LineModel(C_in=0.2e-12)
    f = np.array([7.6e9 - 5e10, 7.6e9 + 5e10])
    got = sc.s21(lc, 10e6, 7.6e9, f)
    expect = 1 - sc.reflection_coefficient(lc, f)
    assert np.allclose(got, expect, rtol=1e-3)


def test_s21_prefactor():
    line = LineModel(C_in=0.0)
    f = np.linspace(7.5e9, 7.7e9, 5)
    base = sc.s21(line, 10e6, 7.6e9, f)
    pf = {"A0": 2.0, "alpha0": 0.3}
    assert np.allclose(sc.s21(line, 10e6, 7.6e9, f, pf), 2 * np.exp(-0.3j) * base)
    with pytest.raises(KeyError):
        sc.s21(line, 10e6, 7.6e9, f, {"gain": 1.0})


def test_linear_resonator_root():
    sol = sc.steady_states(KerrSystem(7.6e9, 7.6e9, 10e6, 0.0), "g", 7.61e9, 3e6)
    assert sol.n_values == [pytest.approx(9e12 / (1e14 + 25e12))]
    assert sol.roots[0].stable


def test_undriven_resonator_is_empty(kerr):
    sol = sc.steady_states(kerr, "e", 7.6e9, 0.0)
    assert sol.n_values == [0.0]


def test_roots_satisfy_cubic_and_match_scan():
    rng = np.random.default_rng(0)
    for _ in range(60):
        kappa = rng.uniform(1e6, 2e7)
        K = rng.uniform(-2e6, 2e6)
        delta = rng.uniform(-10, 10) * kappa
        F = rng.uniform(0, 5) * kappa
        ours = sc.photon_roots(delta, K, kappa, F)
        d, k, f = delta / kappa, K / kappa, F / kappa
        for n in ours:
            terms = np.abs([k * k * n ** 3, 2 * k * d * n * n, (d * d + 0.25) * n, f * f])
            assert abs(sc.cubic_value(n, d, k, 1.0, f)) <= 1e-10 * terms.max()
        ref = cubic_roots_by_scan(delta, K, kappa, F)
        assert len(ours) == len(ref)
        assert np.allclose(ours, ref, rtol=1e-8, atol=0)


def test_three_root_case_has_unstable_middle(kerr):
    d, _ = sc.bifurcation_threshold(kerr)
    wd = kerr.omega_g - 2 * d
    F = 0
    for F in np.linspace(1e6, 4e7, 400):
        if len(sc.steady_states(kerr, "g", wd, F).roots) == 3:
            break
    sol = sc.steady_states(kerr, "g", wd, F)
    assert [r.stable for r in sol.roots] == [True, False, True]


def test_amplitude_solves_steady_equation(kerr):
    for r in sc.steady_states(kerr, "e", kerr.omega_e - 15e6, 20e6).roots:
        a = r.alpha
        lhs = 1j * 15e6 * a + 1j * kerr.K * abs(a) ** 2 * a + 0.5 * kerr.kappa * a
        assert lhs == pytest.approx(20e6, rel=1e-9)
        assert abs(a) ** 2 == pytest.approx(r.n, rel=1e-9)


def test_bifurcation_closed_forms(kerr):
    d, n = sc.bifurcation_threshold(kerr)
    assert abs(n) == pytest.approx(6.355, abs=0.005)
    assert abs(d) == pytest.approx(9.1799e6, abs=5e2)
    assert d > 0
    assert sc.bifurcation_drive(kerr) == pytest.approx(15.4278e6, rel=1e-5)
    with pytest.raises(ValueError):
        sc.bifurcation_threshold(KerrSystem(7e9, 7e9, 1e6, 0.0))
    d2, _ = sc.bifurcation_threshold(KerrSystem(7e9, 7e9, 10.6e6, 0.963e6))
    assert d2 == -d


def _cusp_distance(sys, N):
    """Distance (in cells and in Hz of F) from the closed-form cusp to the nearest
    bistable cell of an N x N grid deliberately offset from the cusp."""
    d, _ = sc.bifurcation_threshold(sys)
    Fb = sc.bifurcation_drive(sys)
    dw, dF = 10e6 / (N - 1), 4e6 / (N - 1)
    wd = np.linspace(sys.omega_g - d - 5e6, sys.omega_g - d + 5e6, N) + 0.37 * dw
    F = np.linspace(Fb - 2e6, Fb + 2e6, N) + 0.29 * dF
    I, J = np.nonzero(sc.bistability_map(sys, "g", wd, F))
    assert not (F[I] < Fb).any()
    cells = np.hypot((F[I] - Fb) / dF, (sys.omega_g - wd[J] - d) / dw)
    k = np.argmin(cells)
    return cells[k], abs(F[I[k]] - Fb) + abs(sys.omega_g - wd[J[k]] - d)


def test_mask_cusp_matches_closed_form(kerr):
    # the wedge opens as (F - F_bif)^(3/2), so the nearest cell sits a fixed
    # number of cells from the cusp and the absolute error shrinks with the grid
    c1, e1 = _cusp_distance(kerr, 101)
    c2, e2 = _cusp_distance(kerr, 401)
    assert c1 < 8 and c2 < 8
    assert e2 < 0.3 * e1


def test_mask_translates_by_twice_chi(kerr):
    wd = kerr.omega_g - 30e6 + 0.25e6 * np.arange(240)
    F = np.linspace(10e6, 60e6, 40)
    shift = int(round(2 * kerr.chi / 0.25e6))
    mg = sc.bistability_map(kerr, "g", wd, F)
    me = sc.bistability_map(kerr, "e", wd, F)
    assert shift == -56
    assert np.array_equal(me[:, :shift], mg[:, -shift:])
    assert mg.any()


def test_mask_empty_without_kerr():
    sys = KerrSystem(7e9, 7.01e9, 5e6, 0.0)
    assert not sc.bistability_map(sys, "g", np.linspace(6.9e9, 7.1e9, 11), np.linspace(0, 1e8, 5)).any()


def test_mask_agrees_with_root_count(kerr):
    wd = np.linspace(kerr.omega_g - 40e6, kerr.omega_g + 5e6, 23)
    F = np.linspace(5e6, 50e6, 17)
    mask = sc.bistability_map(kerr, "g", wd, F)
    for i, f in enumerate(F):
        for j, w in enumerate(wd):
            assert mask[i, j] == (len(sc.steady_states(kerr, "g", w, f).roots) == 3)


def test_linear_decay_trajectory():
    sys = KerrSystem(7.6e9, 7.6e9, 5e6, 0.0)
    t = np.linspace(0, 200e-9, 41)
    a = sc.integrate_transient(sys, "g", 7.59e9, 0.0, t, alpha0=2.0 + 1j)
    expect = (2.0 + 1j) * np.exp((-1j * 2 * np.pi * 10e6 - np.pi * 5e6) * t)
    assert np.allclose(a, expect, rtol=1e-8)


def test_transient_settles_on_stable_root(kerr):
    wd, F = kerr.omega_g - 15e6, 25e6
    t = np.linspace(0, 1.5e-6, 301)
    a = sc.integrate_transient(kerr, "g", wd, F, t)
    stable = [r.n for r in sc.steady_states(kerr, "g", wd, F).stable_roots()]
    assert min(abs(abs(a[-1]) ** 2 - n) for n in stable) < 1e-6 * max(stable)


def test_ring_up_overshoots_into_high_branch(kerr):
    wd, F = kerr.omega_g - 30e6, 80e6
    sol = sc.steady_states(kerr, "g", wd, F)
    assert len(sol.roots) == 1 and sol.roots[0].n > 25
    t = np.linspace(0, 1e-6, 2001)
    n = np.abs(sc.integrate_transient(kerr, "g", wd, F, t)) ** 2
    assert n.max() > 1.05 * n[-1]
    assert n[-1] == pytest.approx(sol.roots[0].n, rel=1e-4)
    # rings: more than one local maximum before settling
    peaks = np.sum((n[1:-1] > n[:-2]) & (n[1:-1] > n[2:]))
    assert peaks >= 2


def test_stable_roots_attract_and_unstable_repels(kerr):
    d, _ = sc.bifurcation_threshold(kerr)
    wd = kerr.omega_g - 2 * d
    F = 1.2 * sc.bifurcation_drive(kerr)
    sol = sc.steady_states(kerr, "g", wd, F)
    while len(sol.roots) != 3:
        F *= 1.05
        sol = sc.steady_states(kerr, "g", wd, F)
    t = np.linspace(0, 3e-6, 301)
    for r in sol.roots:
        a = sc.integrate_transient(kerr, "g", wd, F, t, alpha0=r.alpha * 1.001)
        moved = abs(abs(a[-1]) ** 2 - r.n)
        if r.stable:
            assert moved < 1e-6 * r.n
        else:
            assert moved > 0.1 * r.n


def test_noisy_runs_reproducible(kerr):
    t = np.linspace(0, 100e-9, 51)
    a = sc.integrate_transient(kerr, "g", kerr.omega_g, 5e6, t, NoiseSpec(1.0), seed=7)
    b = sc.integrate_transient(kerr, "g", kerr.omega_g, 5e6, t, NoiseSpec(1.0), seed=7)
    c = sc.integrate_transient(kerr, "g", kerr.omega_g, 5e6, t, NoiseSpec(1.0), seed=8)
    assert np.array_equal(a, b) and not np.array_equal(a, c)


def test_vacuum_noise_variance():
    # linear, undriven: stationary quadrature variance is scale^2 / 4 per quadrature
    sys = KerrSystem(7e9, 7e9, 10e6, 0.0)
    t = np.linspace(0, 20e-6, 4001)
    a = sc.integrate_transient(sys, "g", 7e9, 0.0, t, NoiseSpec(1.0), seed=1, max_dt=0.5e-9)
    tail = a[400:]
    assert np.var(tail.real) == pytest.approx(0.25, rel=0.15)


def test_bad_time_grid(kerr):
    with pytest.raises(ValueError):
        sc.integrate_transient(kerr, "g", 7e9, 1e6, [0.0, 0.0])
    with pytest.raises(ValueError):
        sc.integrate_transient(kerr, "g", 7e9, np.ones(3), [0.0, 1e-9])
    with pytest.raises(ValueError):
        kerr.omega("x")
