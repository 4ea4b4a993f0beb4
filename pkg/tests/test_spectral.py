"""Eigensolver oracles and operator-level identities."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra import numpy as hnp

from heatlab.errors import NonFinite, ParamError
from heatlab.spectral import (MINUS, PLUS, ProblemSpec, SymMatrix, eigen_sym,
                              truncated_laplacian, truncated_laplacian_batch)


def sym(entries):
    return SymMatrix(np.asarray(entries, dtype=float))


def test_diagonal_matrix_sorted():
    assert np.allclose(eigen_sym(sym(np.diag([3.0, 1.0, 2.0]))), [1.0, 2.0, 3.0])


def test_identity_eigenvalues():
    assert np.allclose(eigen_sym(sym(np.eye(4))), np.ones(4))


def test_2x2_against_quadratic_roots():
    # independent oracle: roots of the characteristic polynomial
    rng = np.random.default_rng(123)
    for _ in range(200):
        a, b, c = rng.normal(size=3)
        m = sym([[a, b], [b, c]])
        disc = math.sqrt(((a - c) / 2) ** 2 + b * b)
        expected = np.array([(a + c) / 2 - disc, (a + c) / 2 + disc])
        got = eigen_sym(m)
        assert np.max(np.abs(got - expected)) <= 1e-12 * (1 + np.abs(expected).max())


def test_reconstruction_with_vectors():
    rng = np.random.default_rng(5)
    for n in (2, 4, 6, 8):
        a = SymMatrix(rng.normal(size=(n, n)))
        w, q = eigen_sym(a, with_vectors=True)
        err = np.linalg.norm(q @ np.diag(w) @ q.T - a.a)
        assert err <= 1e-10 * (1 + np.linalg.norm(a.a))


def test_nonfinite_raises():
    m = np.eye(3)
    m[0, 1] = m[1, 0] = np.nan
    with pytest.raises(NonFinite):
        eigen_sym(SymMatrix(m))


def test_symmetrization_is_exact():
    m = np.array([[1.0, 2.0], [0.5, 3.0]])
    s = SymMatrix(m)
    assert s.a[0, 1] == s.a[1, 0]


def test_truncated_examples():
    a = sym(np.diag([-1.0, 0.0, 2.0]))
    assert truncated_laplacian(a, ProblemSpec(3, 2, MINUS)) == pytest.approx(-1.0, abs=1e-14)
    assert truncated_laplacian(a, ProblemSpec(3, 2, PLUS)) == pytest.approx(2.0, abs=1e-14)
    for n in (2, 3, 4):
        for k in range(1, n + 1):
            for sign in (MINUS, PLUS):
                assert truncated_laplacian(sym(np.eye(n)), ProblemSpec(n, k, sign)) == \
                    pytest.approx(k, abs=1e-12)


def test_shift_identity_example():
    rng = np.random.default_rng(9)
    spec = ProblemSpec(3, 2, MINUS)
    a = SymMatrix(rng.normal(size=(3, 3)))
    c = 0.7
    shifted = truncated_laplacian(SymMatrix(a.a + c * np.eye(3)), spec)
    assert abs(shifted - truncated_laplacian(a, spec) - spec.k * c) <= 1e-10


def test_k_equals_n_is_trace():
    rng = np.random.default_rng(11)
    a = SymMatrix(rng.normal(size=(4, 4)))
    for sign in (MINUS, PLUS):
        spec = ProblemSpec(4, 4, sign)
        assert truncated_laplacian(a, spec) == a.trace()


@st.composite
def sym_and_spec(draw):
    n = draw(st.integers(2, 6))
    entries = draw(hnp.arrays(np.float64, (n, n),
                              elements=st.floats(-10, 10, allow_nan=False, width=64)))
    k = draw(st.integers(1, n))
    sign = draw(st.sampled_from([MINUS, PLUS]))
    return SymMatrix(entries), ProblemSpec(n, k, sign)


@settings(max_examples=60, deadline=None)
@given(sym_and_spec(), st.floats(-5, 5, allow_nan=False))
def test_shift_identity_property(ms, c):
    m, spec = ms
    base = truncated_laplacian(m, spec)
    shifted = truncated_laplacian(SymMatrix(m.a + c * np.eye(m.n)), spec)
    assert abs(shifted - base - spec.k * c) <= 1e-10 * (1 + abs(base))


@settings(max_examples=60, deadline=None)
@given(sym_and_spec(), st.integers(0, 2**31 - 1))
def test_psd_monotonicity_property(ms, seed):
    m, spec = ms
    rng = np.random.default_rng(seed)
    b = rng.normal(size=(m.n, m.n))
    psd = b @ b.T
    assert truncated_laplacian(SymMatrix(m.a + psd), spec) >= \
        truncated_laplacian(m, spec) - 1e-10


@settings(max_examples=60, deadline=None)
@given(sym_and_spec())
def test_trace_ordering_property(ms):
    m, spec = ms
    lo = truncated_laplacian(m, ProblemSpec(m.n, spec.k, MINUS))
    hi = truncated_laplacian(m, ProblemSpec(m.n, spec.k, PLUS))
    mid = spec.k / m.n * m.trace()
    slack = 1e-10 * (1 + np.abs(m.a).max())
    assert lo <= mid + slack
    assert mid <= hi + slack


@settings(max_examples=60, deadline=None)
@given(sym_and_spec())
def test_eigen_ascending_and_trace(ms):
    m, _ = ms
    w = eigen_sym(m)
    assert np.all(np.diff(w) >= -1e-12 * (1 + np.abs(w).max()))
    assert abs(np.sum(w) - m.trace()) <= 1e-10 * (1 + np.linalg.norm(m.a))


def test_batch_agrees_with_jacobi():
    rng = np.random.default_rng(17)
    for n in (2, 3, 4, 6):
        a = rng.normal(size=(50, n, n))
        a = 0.5 * (a + np.swapaxes(a, -1, -2))
        for k in range(1, n + 1):
            for sign in (MINUS, PLUS):
                spec = ProblemSpec(n, k, sign)
                batch = truncated_laplacian_batch(a, spec)
                scalar = [truncated_laplacian(SymMatrix(a[i]), spec) for i in range(len(a))]
                assert np.max(np.abs(batch - scalar)) <= 1e-10 * (1 + np.abs(batch).max())


def test_spec_validation():
    with pytest.raises(ParamError):
        ProblemSpec(2, 3, MINUS)  # k > N
    with pytest.raises(ParamError):
        ProblemSpec(1, 1, MINUS)  # N < 2
    with pytest.raises(ParamError):
        ProblemSpec(2, 1, "sideways")
    with pytest.raises(ParamError):
        ProblemSpec(2, 1, MINUS, reaction_p=-1.0)
    with pytest.raises(ParamError):
        truncated_laplacian(sym(np.eye(3)), ProblemSpec(2, 1, MINUS))  # dim mismatch
