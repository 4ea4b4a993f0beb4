"""Small dense symmetric eigensolver and truncated-Laplacian evaluation.

The operators of interest act on a symmetric matrix A through its ordered
eigenvalues lam_1 <= ... <= lam_n:

    minus variant: sum of the k smallest eigenvalues,
    plus  variant: sum of the k largest eigenvalues,

and both reduce to the trace (classical Laplacian) when k == n.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NonFinite, ParamError

MINUS = "minus"
PLUS = "plus"

# Convergence target for the Jacobi sweeps, relative to the matrix norm.
_JACOBI_TOL = 1e-12
_MAX_SWEEPS = 100


@dataclass(frozen=True)
class ProblemSpec:
    """Dimension N, truncation index k, operator sign, optional reaction exponent.

    k == N is allowed and degenerates to the classical Laplacian, where both
    signs evaluate identically.  reaction_p is None for the pure heat flow and
    the exponent p >= 0 of the u^(1+p) source otherwise.
    """

    N: int
    k: int
    sign: str
    reaction_p: float | None = None

    def __post_init__(self):
        if self.N < 2:
            raise ParamError(f"spatial dimension N must be >= 2, got {self.N}")
        if not 1 <= self.k <= self.N:
            raise ParamError(f"truncation index must satisfy 1 <= k <= N, got k={self.k}, N={self.N}")
        if self.sign not in (MINUS, PLUS):
            raise ParamError(f"sign must be '{MINUS}' or '{PLUS}', got {self.sign!r}")
        if self.reaction_p is not None and self.reaction_p < 0:
            raise ParamError(f"reaction exponent must be nonnegative, got {self.reaction_p}")

    @property
    def has_reaction(self) -> bool:
        return self.reaction_p is not None


class SymMatrix:
    """Dense symmetric n x n matrix, 2 <= n <= 8.

    Construction symmetrizes exactly via (M + M^T)/2, so entries[i][j] ==
    entries[j][i] holds bitwise.
    """

    __slots__ = ("a",)

    def __init__(self, entries):
        m = np.asarray(entries, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ParamError(f"expected a square matrix, got shape {m.shape}")
        if not 2 <= m.shape[0] <= 8:
            raise ParamError(f"supported dimensions are 2 <= n <= 8, got n={m.shape[0]}")
        self.a = 0.5 * (m + m.T)

    @property
    def n(self) -> int:
        return self.a.shape[0]

    def trace(self) -> float:
        return float(np.trace(self.a))

    def __repr__(self):
        return f"SymMatrix(n={self.n})"


def _jacobi(a: np.ndarray, want_vectors: bool):
    """Cyclic Jacobi sweeps on a copy of ``a``; returns (diag, vectors|None)."""
    n = a.shape[0]
    a = a.copy()
    v = np.eye(n) if want_vectors else None
    norm = np.linalg.norm(a)
    stop2 = (_JACOBI_TOL * (1.0 + norm)) ** 2
    skip = 1e-20 * (1.0 + norm)
    for _ in range(_MAX_SWEEPS):
        off2 = 2.0 * np.sum(np.tril(a, -1) ** 2)
        if off2 <= stop2:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= skip:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = np.sign(theta) / (abs(theta) + np.hypot(theta, 1.0)) if theta != 0 else 1.0
                c = 1.0 / np.hypot(t, 1.0)
                s = t * c
                rp = a[p, :].copy()
                rq = a[q, :].copy()
                a[p, :] = c * rp - s * rq
                a[q, :] = s * rp + c * rq
                cp = a[:, p].copy()
                cq = a[:, q].copy()
                a[:, p] = c * cp - s * cq
                a[:, q] = s * cp + c * cq
                a[p, q] = a[q, p] = 0.0
                if want_vectors:
                    vp = v[:, p].copy()
                    v[:, p] = c * vp - s * v[:, q]
                    v[:, q] = s * vp + c * v[:, q]
    return np.diag(a).copy(), v


def eigen_sym(A: SymMatrix, with_vectors: bool = False):
    """All eigenvalues of A, ascending, via cyclic Jacobi.

    With ``with_vectors`` also returns the orthogonal Q with A = Q diag(w) Q^T
    (columns ordered to match the sorted eigenvalues).

    Raises NonFinite if any entry is NaN/Inf.
    """
    if not np.all(np.isfinite(A.a)):
        raise NonFinite("matrix has NaN/Inf entries")
    w, v = _jacobi(A.a, with_vectors)
    order = np.argsort(w, kind="stable")
    w = w[order]
    if with_vectors:
        return w, v[:, order]
    return w


def truncated_laplacian(A: SymMatrix, spec: ProblemSpec) -> float:
    """Sum of the k smallest (minus) or k largest (plus) eigenvalues of A.

    Short-circuits to trace(A) for k == N.
    """
    if A.n != spec.N:
        raise ParamError(f"matrix dimension {A.n} does not match spec.N={spec.N}")
    if spec.k == spec.N:
        return A.trace()
    w = eigen_sym(A)
    if spec.sign == MINUS:
        return float(np.sum(w[: spec.k]))
    return float(np.sum(w[spec.N - spec.k :]))


def truncated_laplacian_batch(hessians: np.ndarray, spec: ProblemSpec) -> np.ndarray:
    """Vectorized truncated Laplacian over an array of symmetric matrices.

    ``hessians`` has shape (..., n, n) with n == spec.N and must already be
    symmetric.  This is the hot path of the grid solver: n == 2 uses the
    closed-form eigenvalue pair, larger n a batched LAPACK eigensolve.  Agrees
    with per-matrix :func:`truncated_laplacian` to roundoff (tested).
    """
    h = np.asarray(hessians, dtype=float)
    n = h.shape[-1]
    if n != spec.N:
        raise ParamError(f"matrix dimension {n} does not match spec.N={spec.N}")
    if spec.k == spec.N:
        return np.trace(h, axis1=-2, axis2=-1)
    if n == 2:
        mean = 0.5 * (h[..., 0, 0] + h[..., 1, 1])
        rad = np.hypot(0.5 * (h[..., 0, 0] - h[..., 1, 1]), h[..., 0, 1])
        if spec.k != 1:  # unreachable by the guards above, kept for clarity
            raise ParamError("k must be 1 when N == 2 and k < N")
        return mean - rad if spec.sign == MINUS else mean + rad
    w = np.linalg.eigvalsh(h)
    if spec.sign == MINUS:
        return np.sum(w[..., : spec.k], axis=-1)
    return np.sum(w[..., n - spec.k :], axis=-1)
