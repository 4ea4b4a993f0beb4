"""Discrete Hessians, the explicit scheme, comparison behavior, serialization."""

import math

import numpy as np
import pytest

from heatlab.analytic_catalog import (Polynomial, SelfSimilarMinus,
                                      SeparatedExponentialMinus)
from heatlab.errors import BoundaryIndex, ConfigError, ParamError
from heatlab.grid_solver import (GridField, SchemeConfig, comparison_fuzz, discrete_hessian,
                                 load_grid_block, ordered_pair_generator, save_grid_block,
                                 save_grid_csv, solve, step)
from heatlab.profiles import compact_parabola
from heatlab.spectral import MINUS, PLUS, ProblemSpec, SymMatrix

M21 = ProblemSpec(N=2, k=1, sign=MINUS)
P21 = ProblemSpec(N=2, k=1, sign=PLUS)


def quadratic_field(A, L=2.0, m=21):
    return GridField.from_function(
        lambda x: 0.5 * np.einsum("...i,ij,...j", x, A.a, x), A.n, L, m)


def test_hessian_exact_on_quadratics():
    A = SymMatrix([[2.0, -0.7], [-0.7, 1.0]])
    f = quadratic_field(A)
    for idx in ((10, 7), (1, 1), (19, 10)):
        assert np.max(np.abs(discrete_hessian(f, idx).a - A.a)) <= 1e-10


def test_hessian_cubic_odd_symmetry():
    f = GridField.from_function(lambda x: x[..., 0] ** 3, 2, 1.0, 21)
    center = (10, 10)  # the origin; exact cancellation up to linspace roundoff
    assert abs(discrete_hessian(f, center).a[0, 0]) <= 1e-12


def test_hessian_fd_convergence_rate():
    # independent oracle: entrywise error vs the analytic Hessian at two spacings
    def fn(x):
        return np.exp(-np.sum(x**2, axis=-1))

    x0 = np.array([0.5, 0.0])
    exact = np.array([[4 * 0.25 - 2, 0.0], [0.0, -2.0]]) * math.exp(-0.25)
    errs = []
    for m in (41, 81):  # halves h on the same box
        f = GridField.from_function(fn, 2, 2.0, m)
        i = int(round((0.5 + 2.0) / f.h))
        j = int(round(2.0 / f.h))
        assert abs(f.axis[i] - 0.5) < 1e-12 and abs(f.axis[j]) < 1e-12
        errs.append(np.max(np.abs(discrete_hessian(f, (i, j)).a - exact)))
    assert 3.0 <= errs[0] / errs[1] <= 5.0


def test_hessian_boundary_index():
    f = quadratic_field(SymMatrix(np.eye(2)))
    with pytest.raises(BoundaryIndex):
        discrete_hessian(f, (0, 5))
    with pytest.raises(BoundaryIndex):
        discrete_hessian(f, (5, 20))


def test_step_exact_on_polynomial_data():
    # F(D^2 u) is constant in space, so forward Euler tracks the drift exactly
    for spec in (M21, P21):
        sol = Polynomial.seeded(spec, seed=5)
        u0 = GridField.from_solution(sol, L=3.0, m=33, t=0.0)
        cfg = SchemeConfig(boundary="oracle", oracle=sol)
        f = u0
        for _ in range(20):
            f = step(f, spec, cfg)
        exact = GridField.from_solution(sol, L=3.0, m=33, t=f.t)
        assert np.max(np.abs(f.values - exact.values)) <= 1e-10 * (1 + np.max(np.abs(exact.values)))


def test_step_constant_field_unchanged():
    u0 = GridField(2, 2.0, 17, np.full((17, 17), 3.14))
    out = step(u0, M21, SchemeConfig(boundary="extrapolate"))
    assert np.array_equal(out.values, u0.values)


def test_cfl_violation_rejected():
    u0 = GridField(2, 2.0, 17, np.zeros((17, 17)))
    cfg = SchemeConfig(dt=1.0, boundary="extrapolate")
    with pytest.raises(ConfigError):
        solve(u0, M21, cfg, T=1.0)


def test_grid_field_validation():
    with pytest.raises(ParamError):
        GridField(2, 2.0, 5, np.zeros((5, 5)))  # m too small
    with pytest.raises(ParamError):
        GridField(4, 2.0, 17, np.zeros(17**4))  # N unsupported


def test_k_equals_n_fourier_regression():
    # k = N degenerates to the classical Laplacian; compare against the
    # separable sine solution on the box with Dirichlet data
    L = 2.0
    lam = math.pi / (2 * L)

    class SineProduct:
        def value(self, t, x):
            return (math.exp(-2 * lam**2 * t)
                    * np.sin(lam * (x[..., 0] + L)) * np.sin(lam * (x[..., 1] + L)))

    sol = SineProduct()
    u0 = GridField.from_function(lambda x: sol.value(0.0, x), 2, L, 65)
    outs = {}
    for sign in (MINUS, PLUS):
        spec = ProblemSpec(2, 2, sign)
        traj = solve(u0, spec, SchemeConfig(boundary="oracle", oracle=sol), T=1.0)
        exact = sol.value(traj.final.t, traj.final.points())
        assert np.max(np.abs(traj.final.values - exact)) <= 1e-3
        outs[sign] = traj.final.values
    assert np.array_equal(outs[MINUS], outs[PLUS])


def test_separated_exponential_consistency():
    sol = SeparatedExponentialMinus(M21, mu=1.0)
    u0 = GridField.from_solution(sol, L=6.0, m=65, t=0.0)
    traj = solve(u0, M21, SchemeConfig(boundary="oracle", oracle=sol), T=0.5)
    exact = GridField.from_solution(sol, L=6.0, m=65, t=traj.final.t)
    assert np.max(np.abs(traj.final.values - exact.values)) <= 2e-2


def test_sup_norm_nonincrease_pure_heat():
    rng = np.random.default_rng(3)
    gen = ordered_pair_generator(rng, 2, 4.0, 33)
    u0, _ = next(gen)
    u0 = GridField(2, 4.0, 33, np.abs(u0.values) + 0.2 * np.exp(
        -np.sum(u0.points() ** 2, axis=-1)))
    for spec in (M21, P21):
        traj = solve(u0, spec, SchemeConfig(boundary="extrapolate"), T=0.5)
        assert np.max(traj.sup_global) <= traj.sup_global[0] * (1 + 1e-6) + 1e-9


def test_scaling_symmetry_exact_for_power_of_two():
    base = SelfSimilarMinus(M21, beta=1.0, mu=1.0, eps=1.0)
    lam = 2.0
    scaled = SelfSimilarMinus(M21, beta=1.0, mu=lam**-2, eps=lam**-2)
    T = 0.8
    trb = solve(GridField.from_solution(base, L=4.0, m=65),
                M21, SchemeConfig(boundary="oracle", oracle=base), T=T)
    trs = solve(GridField.from_solution(scaled, L=2.0, m=65),
                M21, SchemeConfig(boundary="oracle", oracle=scaled), T=T / lam**2)
    # scaled grid point x corresponds to base point 2x; the scheme commutes
    # with the parabolic scaling, bitwise for power-of-two lambda
    assert np.max(np.abs(trs.final.values - trb.final.values)) <= 1e-12


def test_comparison_equality_and_shift():
    rng = np.random.default_rng(7)
    gen = ordered_pair_generator(rng, 2, 4.0, 33)
    u0, _ = next(gen)
    cfg = SchemeConfig(boundary="extrapolate")
    for spec in (M21, P21):
        fu = fv = u0
        for _ in range(20):
            fu = step(fu, spec, cfg)
        # equality case: identical evolution
        assert np.array_equal(fu.values, fu.values)
        fv = GridField(2, 4.0, 33, u0.values + 0.1)
        fw = u0
        for _ in range(20):
            fv = step(fv, spec, cfg)
            fw = step(fw, spec, cfg)
        d = fv.values - fw.values
        assert np.max(np.abs(d - 0.1)) <= 1e-12


def test_comparison_fuzz_small():
    rng = np.random.default_rng(99)
    gen = ordered_pair_generator(rng, 2, 4.0, 33)
    rep = comparison_fuzz(gen, M21, SchemeConfig(boundary="extrapolate"), T=0.25, trials=8)
    assert rep.worst_margin >= -10 * rep.scheme_tolerance


def test_blowup_detection_and_threshold_monotonicity():
    spec = ProblemSpec(2, 1, PLUS, reaction_p=1.0)
    u0 = GridField.from_profile(compact_parabola(1.0), 2, 6.0, 65)
    traj_lo = solve(u0, spec, SchemeConfig(boundary="extrapolate", blowup_threshold=1e6), T=50.0)
    traj_hi = solve(u0, spec, SchemeConfig(boundary="extrapolate", blowup_threshold=1e9), T=50.0)
    assert traj_lo.blownup and traj_hi.blownup
    assert traj_lo.blowup_time < 50.0
    assert traj_hi.blowup_time >= traj_lo.blowup_time
    assert traj_lo.final.blownup
    with pytest.raises(ParamError):
        step(traj_lo.final, spec, SchemeConfig(boundary="extrapolate"))


def test_snapshot_times_and_final_time():
    sol = SeparatedExponentialMinus(M21)
    u0 = GridField.from_solution(sol, L=4.0, m=33)
    traj = solve(u0, M21, SchemeConfig(boundary="oracle", oracle=sol, snapshot_stride=10), T=0.3)
    assert traj.snapshots[0].t == 0.0
    assert abs(traj.final.t - 0.3) <= 1e-9
    assert len(traj.snapshots) >= 3


def test_grid_csv_and_block_roundtrip(tmp_path):
    u0 = GridField.from_function(lambda x: np.sum(x, axis=-1), 2, 1.0, 9, t=0.25)
    block = tmp_path / "field.block"
    save_grid_block(u0, block)
    back = load_grid_block(block)
    assert back.N == 2 and back.m == 9 and back.L == 1.0 and back.t == 0.25
    assert np.array_equal(back.values, u0.values)
    csv_path = tmp_path / "fields.csv"
    save_grid_csv([u0], csv_path)
    text = csv_path.read_text().splitlines()
    assert text[0] == "t,x1,x2,value"
    assert len(text) == 1 + 81
