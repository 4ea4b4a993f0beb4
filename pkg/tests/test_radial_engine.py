"""Transport and convolution reductions, convexity certification, asymptotics."""

import math

import numpy as np
import pytest

from heatlab.errors import (DivergentMass, ParamError, QuadratureUnderresolved,
                            UnsupportedProfile)
from heatlab.profiles import (compact_parabola, constant, exp_decay, exp_quadratic,
                              gauss_kernel, power_tail, quenching, step_indicator)
from heatlab.radial_engine import (KernelConfig, RadialField, asymptotic_profile_gap,
                                   check_convexity_condition, convolution_series,
                                   heat_convolve_k, load_series_csv, profile_moment,
                                   quench_time, radial_mass, save_series_csv,
                                   transport_solve, sphere_area)
from heatlab.spectral import MINUS, PLUS, ProblemSpec

M21 = ProblemSpec(N=2, k=1, sign=MINUS)
M32 = ProblemSpec(N=3, k=2, sign=MINUS)


def test_transport_separated_identity():
    # g(s) = mu e^{-s^2/(2k)} transports to mu e^{-t} e^{-r^2/(2k)}
    r = np.linspace(0, 5, 300)
    for spec, mu in ((M21, 1.0), (M32, 2.5)):
        psi = transport_solve(exp_quadratic(mu=mu, k=spec.k), spec, 0.7, r)
        exact = mu * math.exp(-0.7) * np.exp(-(r**2) / (2 * spec.k))
        assert np.max(np.abs(psi - exact)) <= 1e-14 * mu


def test_transport_time_zero_identity():
    g = exp_decay(mu=2.0)
    r = np.linspace(0, 4, 100)
    assert np.array_equal(transport_solve(g, M21, 0.0, r), g.value(r))


def test_transport_quenching_extinction():
    g = quenching()
    r = np.linspace(0, 3, 400)
    for t in (0.5, 0.6, 5.0):
        assert np.max(np.abs(transport_solve(g, M21, t, r))) == 0.0
    assert np.max(transport_solve(g, M21, 0.4, r)) > 0.0


def test_transport_requires_minus_and_k_lt_n():
    with pytest.raises(ParamError):
        transport_solve(exp_decay(), ProblemSpec(2, 1, PLUS), 1.0, 1.0)
    with pytest.raises(ParamError):
        transport_solve(exp_decay(), ProblemSpec(2, 2, MINUS), 1.0, 1.0)


def test_quench_time_values():
    assert quench_time(quenching(), M21) == pytest.approx(0.5)
    assert quench_time(quenching(), ProblemSpec(3, 2, MINUS)) == pytest.approx(0.25)
    assert quench_time(compact_parabola(2.0), M21) == pytest.approx(2.0)
    with pytest.raises(UnsupportedProfile):
        quench_time(exp_decay(), M21)


def test_convolution_gaussian_example():
    v = heat_convolve_k(gauss_kernel(a=1, k=2), 2, 1.0, 0.0)
    assert abs(v - 1 / (8 * math.pi)) <= 1e-8 / (8 * math.pi)


def test_convolution_preserves_constants():
    r = np.array([0.0, 0.7, 2.0, 4.5])
    for k in (1, 2, 3, 4):
        psi = heat_convolve_k(constant(1.0), k, 0.8, r)
        assert np.max(np.abs(psi - 1.0)) <= 1e-8


@pytest.mark.parametrize("k", [1, 2, 3])
def test_convolution_matches_shifted_gaussian(k):
    g = gauss_kernel(a=1.0, k=k)
    r = np.linspace(0, 5, 60)
    for t in (0.5, 1.0, 2.0):
        got = heat_convolve_k(g, k, t, r)
        want = (4 * math.pi * (1 + t)) ** (-k / 2.0) * np.exp(-(r**2) / (4 * (1 + t)))
        assert np.max(np.abs(got - want) / want) <= 1e-8


def test_generic_sphere_matches_closed_forms():
    cfg = KernelConfig(angular="generic_sphere_quadrature")
    r = np.linspace(0, 4, 25)
    for k in (2, 3):
        got = heat_convolve_k(gauss_kernel(a=1, k=k), k, 1.0, r, cfg)
        want = (8 * math.pi) ** (-k / 2.0) * np.exp(-(r**2) / 8)
        assert np.max(np.abs(got - want) / want) <= 1e-8


def test_convolution_k1_mass_conserved():
    # integral of (1-y^2)_+ over R is 4/3, preserved by the 1-d heat flow
    g = compact_parabola(1.0)
    for t in (0.3, 1.0, 3.0):
        mass = radial_mass(lambda rho: heat_convolve_k(g, 1, t, rho), 1,
                           r_max=1 + 12 * math.sqrt(t) + 3, nodes=2048)
        assert abs(mass - 4.0 / 3.0) <= 1e-6 * 4.0 / 3.0


def test_small_time_recovery():
    g = gauss_kernel(a=0.5, k=1)
    r = np.linspace(0, 2, 80)
    cfg = KernelConfig(nodes=4096)
    sups = []
    for t in (1e-3, 1e-4):
        psi = heat_convolve_k(g, 1, t, r, cfg)
        sups.append(np.max(np.abs(psi - g.value(r))))
    assert sups[1] < sups[0]


def test_quadrature_underresolved_raises():
    cfg = KernelConfig(nodes=64)
    with pytest.raises(QuadratureUnderresolved):
        heat_convolve_k(gauss_kernel(a=1, k=1), 1, 1e-6, np.array([5.0]), cfg)


def test_kernel_config_validation():
    with pytest.raises(ParamError):
        KernelConfig(nodes=32)
    with pytest.raises(ParamError):
        KernelConfig(r_cutoff=-1.0)
    with pytest.raises(ParamError):
        KernelConfig(angular="mystery")


def test_convexity_counterexample_and_clean():
    r_grid = np.arange(0, 2.5 + 1e-12, 0.025)
    t_vals = [0.1]
    rep = check_convexity_condition(convolution_series(step_indicator(), 1, t_vals, r_grid))
    assert not rep.certified
    assert rep.violation_near(0.1, 0.5)
    rep2 = check_convexity_condition(convolution_series(compact_parabola(1.0), 1, t_vals, r_grid))
    assert rep2.certified
    assert rep2.worst_defect >= -1e-9


def test_convexity_shifted_gaussian_window():
    r_grid = np.arange(0, 10 + 1e-12, 0.05)
    series = convolution_series(gauss_kernel(a=1, k=2), 2, [0.1, 1.0, 5.0], r_grid)
    assert check_convexity_condition(series).certified


def test_asymptotic_gap_decreases():
    g = gauss_kernel(a=1, k=1)
    gaps = {t: asymptotic_profile_gap(g, 1, t) for t in (1.0, 10.0, 100.0)}
    assert gaps[100.0] / gaps[10.0] < 0.5
    c = compact_parabola(1.0)
    assert asymptotic_profile_gap(c, 1, 100.0) < asymptotic_profile_gap(c, 1, 1.0)


def test_divergent_mass():
    with pytest.raises(DivergentMass):
        profile_moment(power_tail(mu=1.0, beta=0.5, eps=1.0), 2)


def test_profile_moments():
    assert profile_moment(gauss_kernel(a=1, k=1), 1) == pytest.approx(1.0, abs=1e-9)
    assert profile_moment(compact_parabola(1.0), 1) == pytest.approx(4.0 / 3.0, rel=1e-12)
    assert sphere_area(2) == pytest.approx(2 * math.pi)
    assert sphere_area(3) == pytest.approx(4 * math.pi)


def test_series_csv_roundtrip(tmp_path):
    r = np.linspace(0, 2, 11)
    series = [RadialField(0.5, r, np.exp(-r)), RadialField(1.0, r, np.exp(-2 * r))]
    path = tmp_path / "series.csv"
    save_series_csv(series, path)
    back = load_series_csv(path)
    assert len(back) == 2
    assert back[0].t == 0.5
    assert np.array_equal(back[1].values, series[1].values)
    assert np.array_equal(back[0].r_grid, r)
