"""Closed-form families: exact values, residual convergence, profile conditions."""

import math

import numpy as np
import pytest

from heatlab.analytic_catalog import (HYP_CI, HYP_SELF, REVERSE, GaussianPlus, OneVar,
                                      Polynomial, QuenchingProfileMinus, RadialTransportMinus,
                                      SelfSimilarMinus, SeparatedExponentialMinus,
                                      ShiftedGaussianPlus, StationaryMinus, TravellingWave,
                                      check_profile_condition, pde_residual,
                                      residual_convergence, solution_from_id)
from heatlab.errors import DomainError, ParamError
from heatlab.profiles import (ClosedFormProfile, compact_parabola, exp_decay, exp_quadratic,
                              power_tail, quenching)
from heatlab.radial_engine import radial_mass
from heatlab.spectral import MINUS, PLUS, ProblemSpec, SymMatrix

M21 = ProblemSpec(N=2, k=1, sign=MINUS)
P21 = ProblemSpec(N=2, k=1, sign=PLUS)
M32 = ProblemSpec(N=3, k=2, sign=MINUS)
P32 = ProblemSpec(N=3, k=2, sign=PLUS)


def all_variants():
    return [
        OneVar(M21, profile="cosh"),
        OneVar(P21, profile="neg_cosh"),
        TravellingWave(M21), TravellingWave(P21),
        Polynomial.seeded(M32, 7), Polynomial.seeded(P32, 7),
        SelfSimilarMinus(M21, beta=1.0, mu=1.0, eps=0.0),
        SelfSimilarMinus(M32, beta=0.7, mu=2.0, eps=0.5),
        GaussianPlus(P21), GaussianPlus(P32),
        ShiftedGaussianPlus(P21, a=1.0),
        RadialTransportMinus(M21, g=exp_decay()),
        RadialTransportMinus(M32, g=exp_quadratic(mu=1.0, k=2)),
        SeparatedExponentialMinus(M21),
        QuenchingProfileMinus(M21),
        StationaryMinus(ProblemSpec(2, 1, MINUS, reaction_p=1.0), p=1.0, mu=1.0),
    ]


def test_eval_examples():
    s = SelfSimilarMinus(M21, beta=1.0, mu=1.0, eps=0.0)
    assert s.value(1.0, np.zeros(2)) == pytest.approx(0.5, abs=1e-15)
    g = GaussianPlus(ProblemSpec(3, 2, PLUS), mu=1.0)
    assert g.value(1.0, np.zeros(3)) == pytest.approx(1.0, abs=1e-15)
    q = QuenchingProfileMinus(M21)
    for x in (np.zeros(2), np.array([0.7, -1.3]), np.array([5.0, 0.0])):
        assert q.value(0.6, x) == 0.0  # 2kt >= 1 extinguishes everywhere


def test_domain_errors():
    g = GaussianPlus(P21)
    with pytest.raises(DomainError):
        g.value(0.0, np.zeros(2))
    s = SelfSimilarMinus(M21, beta=1.0, mu=1.0, eps=0.0)
    with pytest.raises(DomainError):
        s.value(0.0, np.zeros(2))  # singular space-time origin
    assert s.value(0.0, np.array([1.0, 0.0])) == pytest.approx(1.0)
    with pytest.raises(DomainError):
        s.value(-0.1, np.zeros(2))


def test_param_errors():
    with pytest.raises(ParamError):
        SelfSimilarMinus(P21, beta=1.0, mu=1.0)  # wrong sign
    with pytest.raises(ParamError):
        SelfSimilarMinus(M21, beta=-1.0, mu=1.0)
    with pytest.raises(ParamError):
        GaussianPlus(M21)
    with pytest.raises(ParamError):
        TravellingWave(M21, c=0.0)
    with pytest.raises(ParamError):
        TravellingWave(M21, beta=-1.0)
    with pytest.raises(ParamError):
        OneVar(M21, profile="neg_cosh")  # concave profile on the minus flow
    with pytest.raises(ParamError):
        SelfSimilarMinus(ProblemSpec(2, 2, MINUS), beta=1.0)  # k=N has no transport
    with pytest.raises(ParamError):
        StationaryMinus(M21, p=1.0, mu=1.0)  # spec lacks the reaction


def test_polynomial_residual_roundoff():
    sol = Polynomial.seeded(M32, seed=3)
    rng = np.random.default_rng(0)
    for _ in range(10):
        t = rng.uniform(0.5, 1.5)
        x = rng.uniform(-1, 1, size=3)
        # exact up to the h^-2 roundoff amplification of the sampled values
        scale = 1.0 + abs(sol.value(t, x))
        assert abs(pde_residual(sol, t, x, 1e-3)) <= 1e-8 * scale


def test_travelling_wave_residual_bound():
    sol = TravellingWave(M21, alpha=0.0, beta=1.0, c=1.0)
    x = np.array([1.0, 0.0])
    assert abs(pde_residual(sol, 1.0, x, 1e-3)) <= 1e-5


def test_stationary_residual_bound():
    spec = ProblemSpec(2, 1, MINUS, reaction_p=1.0)
    sol = StationaryMinus(spec, p=1.0, mu=1.0)
    x = np.array([1.0, 0.0])
    assert abs(pde_residual(sol, 0.7, x, 1e-3)) <= 1e-5
    assert abs(pde_residual(sol, 2.3, x, 1e-3)) <= 1e-5  # stationary: any t


def test_residual_needs_interior_time():
    sol = SeparatedExponentialMinus(M21)
    with pytest.raises(DomainError):
        pde_residual(sol, 5e-4, np.zeros(2), 1e-3)


def test_quenching_gluing_collar_excluded():
    sol = QuenchingProfileMinus(M21)
    h = 1e-3
    # 2kt + |x|^2 = 1 at t = 0.18, |x| = 0.8
    with pytest.raises(DomainError):
        pde_residual(sol, 0.18, np.array([0.8, 0.0]), h)


@pytest.mark.parametrize("sol", all_variants(), ids=lambda s: s.name)
def test_residual_convergence_all_variants(sol):
    rng = np.random.default_rng(42)
    r1, r2, slope = residual_convergence(sol, rng, count=40, h=2e-3)
    assert slope >= 1.8, (sol.name, r1, r2, slope)


def test_self_similar_scaling_invariance():
    sol = SelfSimilarMinus(M21, beta=1.3, mu=2.0, eps=0.0)
    rng = np.random.default_rng(1)
    for lam in (2.0, 3.7):
        for _ in range(25):
            t = rng.uniform(0.1, 2.0)
            x = rng.uniform(-2, 2, size=2)
            lhs = sol.value(lam**2 * t, lam * x)
            rhs = lam ** (-2 * sol.beta) * sol.value(t, x)
            assert abs(lhs - rhs) <= 1e-12 * (1 + abs(rhs))


def test_gaussian_plus_mass_growth():
    n, k = 2, 1
    spec = ProblemSpec(n, k, PLUS)
    sol = GaussianPlus(spec, mu=(4 * math.pi) ** (-n / 2.0))
    for t in (1.0, 4.0):
        def radial(r):
            pts = np.zeros(r.shape + (n,))
            pts[..., 0] = r
            return sol.value(t, pts)

        mass = radial_mass(radial, n, r_max=14.0 * math.sqrt(t), nodes=2048)
        assert abs(mass - t ** ((n - k) / 2.0)) <= 1e-6 * t ** ((n - k) / 2.0)


def test_self_similar_sup_decay():
    sol = SelfSimilarMinus(M21, beta=0.9, mu=1.7, eps=0.0)
    x = np.stack(np.meshgrid(np.linspace(-3, 3, 61), np.linspace(-3, 3, 61),
                             indexing="ij"), axis=-1)
    expected = sol.mu * (2 * sol.spec.k) ** (-sol.beta)
    for t in (1.0, 10.0, 100.0):
        sup = float(np.max(sol.value(t, x)))
        assert abs(sup * t**sol.beta - expected) <= 1e-6 * expected


def test_profile_conditions_orientation():
    r = np.linspace(0.01, 5, 500)
    # the eigenfunction datum satisfies the transport-side condition
    assert check_profile_condition(exp_quadratic(mu=1.0, k=1), r, HYP_CI).size == 0
    # power tails satisfy it as well
    assert check_profile_condition(power_tail(mu=1.0, beta=1.0, eps=0.5), r, HYP_CI).size == 0
    # quenching datum satisfies it (its transport extinguishes)
    rq = np.linspace(0.01, 2, 400)
    assert check_profile_condition(quenching(), rq, HYP_CI).size == 0
    # e^{-s^2/4} satisfies the >= form everywhere and fails the reverse form
    g = ClosedFormProfile(lambda s: np.exp(-s**2 / 4),
                          lambda s: -(s / 2) * np.exp(-s**2 / 4),
                          lambda s: (s**2 / 4 - 0.5) * np.exp(-s**2 / 4), name="heat_profile")
    assert check_profile_condition(g, r, HYP_SELF).size == 0
    assert check_profile_condition(g, r, REVERSE).size == r.size


def test_compact_parabola_equality_case():
    rc = np.linspace(0.005, 0.995, 199)
    assert check_profile_condition(compact_parabola(1.0), rc, HYP_CI).size == 0
    assert check_profile_condition(compact_parabola(1.0), rc, REVERSE).size == 0


def test_solution_ids():
    sol = solution_from_id("self_similar_minus{beta=1,mu=1,eps=0}", M21)
    assert isinstance(sol, SelfSimilarMinus)
    sol2 = solution_from_id("radial_transport_minus{profile=exp_quadratic,mu=2}", M32)
    assert isinstance(sol2, RadialTransportMinus)
    assert sol2.g.value(0.0) == 2.0
    with pytest.raises(ParamError):
        solution_from_id("unknown_family", M21)
    with pytest.raises(ParamError):
        solution_from_id("gaussian_plus{bogus=3}", P21)
