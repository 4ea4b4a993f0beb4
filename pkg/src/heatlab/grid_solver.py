"""Explicit N-dimensional solver for du/dt = F_k(D2_h u) + u^(1+p) on a box.

Forward Euler with per-point discrete Hessians: diagonal entries by central
second differences, cross terms by the 4-point centered formula, symmetrized
before the eigenvalue evaluation.  Blow-up is a state, not an error: any value
beyond the threshold (or non-finite) freezes the field with a stamped time.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np

from .errors import BoundaryIndex, ConfigError, NonFinite, ParamError
from .spectral import MINUS, ProblemSpec, SymMatrix, truncated_laplacian_batch

BOUNDARY_ORACLE = "oracle"
BOUNDARY_EXTRAPOLATE = "extrapolate"


@dataclass
class GridField:
    """Uniform Cartesian sample of u(t, .) on the box [-L, L]^N."""

    N: int
    L: float
    m: int
    values: np.ndarray
    t: float = 0.0
    blownup: bool = False
    blowup_time: float | None = None

    def __post_init__(self):
        if self.N not in (2, 3):
            raise ParamError("grid solver supports N in {2, 3}")
        if self.m < 9:
            raise ParamError("need m >= 9 points per axis for stencil margins")
        if self.L <= 0:
            raise ParamError("box half-width must be positive")
        self.values = np.asarray(self.values, dtype=float).reshape((self.m,) * self.N)
        if not self.blownup and not np.all(np.isfinite(self.values)):
            raise NonFinite("grid field has non-finite values but is not marked blown up")

    @property
    def h(self) -> float:
        return 2.0 * self.L / (self.m - 1)

    @property
    def axis(self) -> np.ndarray:
        return np.linspace(-self.L, self.L, self.m)

    def points(self) -> np.ndarray:
        """Grid coordinates, shape (m, ..., m, N)."""
        grids = np.meshgrid(*([self.axis] * self.N), indexing="ij")
        return np.stack(grids, axis=-1)

    def sup_norm(self, margin: float = 0.0) -> float:
        """Max |u| over the box shrunk by ``margin`` coordinate units per side."""
        cells = int(np.ceil(margin / self.h)) if margin > 0 else 0
        if 2 * cells >= self.m - 2:
            raise ParamError("diagnostic margin leaves no interior points")
        sl = slice(cells, self.m - cells)
        return float(np.max(np.abs(self.values[(sl,) * self.N])))

    @staticmethod
    def from_function(fn, N: int, L: float, m: int, t: float = 0.0) -> "GridField":
        f = GridField(N, L, m, np.zeros((m,) * N), t)
        f.values = np.asarray(fn(f.points()), dtype=float).reshape((m,) * N)
        if not np.all(np.isfinite(f.values)):
            raise NonFinite("initial data contains non-finite values")
        return f

    @staticmethod
    def from_solution(sol, L: float, m: int, t: float = 0.0) -> "GridField":
        return GridField.from_function(lambda x: sol.value(t, x), sol.spec.N, L, m, t)

    @staticmethod
    def from_profile(g, N: int, L: float, m: int, scale: float = 1.0) -> "GridField":
        return GridField.from_function(
            lambda x: scale * g.value(np.sqrt(np.sum(x**2, axis=-1))), N, L, m, 0.0)


@dataclass
class SchemeConfig:
    """Time step, boundary treatment, and blow-up detection controls.

    dt = None resolves to the CFL-limited step cfl * h^2 / (2k); an explicit
    dt above that bound is a ConfigError.  ``oracle`` must expose
    value(t, points) and is required by the oracle boundary mode.
    """

    dt: float | None = None
    cfl: float = 0.2
    boundary: str = BOUNDARY_ORACLE
    oracle: object = None
    blowup_threshold: float = 1e6
    snapshot_stride: int = 100

    def __post_init__(self):
        if self.cfl <= 0:
            raise ConfigError("cfl safety factor must be positive")
        if self.boundary not in (BOUNDARY_ORACLE, BOUNDARY_EXTRAPOLATE):
            raise ConfigError(f"unknown boundary mode {self.boundary!r}")
        if self.boundary == BOUNDARY_ORACLE and self.oracle is None:
            raise ConfigError("oracle boundary mode needs an oracle solution")
        if self.blowup_threshold <= 0:
            raise ConfigError("blow-up threshold must be positive")
        if self.snapshot_stride < 1:
            raise ConfigError("snapshot stride must be >= 1")

    def resolve_dt(self, h: float, k: int) -> float:
        bound = self.cfl * h**2 / (2.0 * k)
        if self.dt is None:
            return bound
        if self.dt <= 0:
            raise ConfigError("dt must be positive")
        if self.dt > bound * (1 + 1e-12):
            raise ConfigError(
                f"dt={self.dt} violates the CFL bound cfl*h^2/(2k)={bound:.3e}")
        return self.dt


def discrete_hessian(f: GridField, idx) -> SymMatrix:
    """Second-difference Hessian at an interior multi-index; exact on quadratics."""
    idx = tuple(int(i) for i in idx)
    if len(idx) != f.N:
        raise ParamError(f"index must have {f.N} components")
    if any(i < 1 or i > f.m - 2 for i in idx):
        raise BoundaryIndex(f"index {idx} is not interior for m={f.m}")
    v = f.values
    h2 = f.h**2
    n = f.N
    hess = np.empty((n, n))
    for i in range(n):
        up = list(idx); up[i] += 1
        dn = list(idx); dn[i] -= 1
        hess[i, i] = (v[tuple(up)] - 2 * v[idx] + v[tuple(dn)]) / h2
        for j in range(i + 1, n):
            pp = list(idx); pp[i] += 1; pp[j] += 1
            mm = list(idx); mm[i] -= 1; mm[j] -= 1
            pm = list(idx); pm[i] += 1; pm[j] -= 1
            mp = list(idx); mp[i] -= 1; mp[j] += 1
            hess[i, j] = hess[j, i] = (
                v[tuple(pp)] + v[tuple(mm)] - v[tuple(pm)] - v[tuple(mp)]) / (4 * h2)
    return SymMatrix(hess)


def _interior_operator(v: np.ndarray, h: float, spec: ProblemSpec) -> np.ndarray:
    """F_k^sign of the discrete Hessian at every interior point (vectorized)."""
    h2 = h * h
    if spec.N == 2:
        c = v[1:-1, 1:-1]
        h11 = (v[2:, 1:-1] - 2 * c + v[:-2, 1:-1]) / h2
        h22 = (v[1:-1, 2:] - 2 * c + v[1:-1, :-2]) / h2
        if spec.k == 2:
            return h11 + h22
        h12 = (v[2:, 2:] + v[:-2, :-2] - v[2:, :-2] - v[:-2, 2:]) / (4 * h2)
        mean = 0.5 * (h11 + h22)
        rad = np.hypot(0.5 * (h11 - h22), h12)
        return mean - rad if spec.sign == MINUS else mean + rad
    # N == 3
    c = v[1:-1, 1:-1, 1:-1]
    d = [
        (v[2:, 1:-1, 1:-1] - 2 * c + v[:-2, 1:-1, 1:-1]) / h2,
        (v[1:-1, 2:, 1:-1] - 2 * c + v[1:-1, :-2, 1:-1]) / h2,
        (v[1:-1, 1:-1, 2:] - 2 * c + v[1:-1, 1:-1, :-2]) / h2,
    ]
    if spec.k == 3:
        return d[0] + d[1] + d[2]
    x12 = (v[2:, 2:, 1:-1] + v[:-2, :-2, 1:-1] - v[2:, :-2, 1:-1] - v[:-2, 2:, 1:-1]) / (4 * h2)
    x13 = (v[2:, 1:-1, 2:] + v[:-2, 1:-1, :-2] - v[2:, 1:-1, :-2] - v[:-2, 1:-1, 2:]) / (4 * h2)
    x23 = (v[1:-1, 2:, 2:] + v[1:-1, :-2, :-2] - v[1:-1, 2:, :-2] - v[1:-1, :-2, 2:]) / (4 * h2)
    hess = np.empty(c.shape + (3, 3))
    hess[..., 0, 0] = d[0]
    hess[..., 1, 1] = d[1]
    hess[..., 2, 2] = d[2]
    hess[..., 0, 1] = hess[..., 1, 0] = x12
    hess[..., 0, 2] = hess[..., 2, 0] = x13
    hess[..., 1, 2] = hess[..., 2, 1] = x23
    return truncated_laplacian_batch(hess, spec)


def _boundary_faces(m: int, n: int):
    faces = []
    for ax in range(n):
        for side in (0, m - 1):
            sl = [slice(None)] * n
            sl[ax] = side
            faces.append(tuple(sl))
    return faces


@lru_cache(maxsize=16)
def _face_points(n: int, L: float, m: int):
    """Boundary-face index tuples and their coordinates, cached per geometry."""
    axis = np.linspace(-L, L, m)
    grids = np.meshgrid(*([axis] * n), indexing="ij")
    pts = np.stack(grids, axis=-1)
    out = []
    for face in _boundary_faces(m, n):
        coords = np.ascontiguousarray(pts[face])
        coords.setflags(write=False)
        out.append((face, coords))
    return tuple(out)


def _apply_boundary(new: np.ndarray, fld: GridField, t_new: float, cfg: SchemeConfig) -> None:
    m, n = fld.m, fld.N
    if cfg.boundary == BOUNDARY_EXTRAPOLATE:
        # constant extrapolation: copy the adjacent inner slab, axis by axis
        for ax in range(n):
            src0 = [slice(None)] * n
            src0[ax] = 1
            dst0 = [slice(None)] * n
            dst0[ax] = 0
            new[tuple(dst0)] = new[tuple(src0)]
            src1 = [slice(None)] * n
            src1[ax] = m - 2
            dst1 = [slice(None)] * n
            dst1[ax] = m - 1
            new[tuple(dst1)] = new[tuple(src1)]
        return
    for face, coords in _face_points(n, fld.L, m):
        new[face] = cfg.oracle.value(t_new, coords)


def step(f: GridField, spec: ProblemSpec, cfg: SchemeConfig) -> GridField:
    """One forward-Euler update; returns a new field (or a BlownUp-stamped one)."""
    if f.blownup:
        raise ParamError("cannot step a blown-up field")
    if spec.N != f.N:
        raise ParamError("field dimension does not match spec.N")
    m_thr = cfg.blowup_threshold
    v = f.values
    if not np.all(np.isfinite(v)) or np.max(np.abs(v)) > m_thr:
        return replace(f, blownup=True, blowup_time=f.t)
    dt = cfg.resolve_dt(f.h, spec.k)
    rate = _interior_operator(v, f.h, spec)
    if spec.has_reaction:
        core = v[(slice(1, -1),) * f.N]
        # clip roundoff negatives: the reaction is defined for u >= 0
        with np.errstate(over="ignore"):
            rate = rate + np.maximum(core, 0.0) ** (1.0 + spec.reaction_p)
    new = v.copy()
    with np.errstate(over="ignore", invalid="ignore"):
        new[(slice(1, -1),) * f.N] += dt * rate
    t_new = f.t + dt
    _apply_boundary(new, f, t_new, cfg)
    if np.all(np.isfinite(new)) and np.max(np.abs(new)) <= m_thr:
        return GridField(f.N, f.L, f.m, new, t_new)
    # midpoint of the bracketing step stamps the crossing
    return GridField(f.N, f.L, f.m, new, t_new, blownup=True, blowup_time=f.t + 0.5 * dt)


@dataclass
class Trajectory:
    """Deterministic record of a solve: dense sup-norm series, sparse snapshots."""

    times: np.ndarray
    sup_global: np.ndarray
    sup_window: np.ndarray
    window_margin: float
    snapshots: list
    final: GridField
    blownup: bool = False
    blowup_time: float | None = None

    def sup_series(self, windowed: bool = True):
        return self.times, (self.sup_window if windowed else self.sup_global)


def solve(u0: GridField, spec: ProblemSpec, cfg: SchemeConfig, T: float,
          window_margin: float = 0.0) -> Trajectory:
    """March u0 forward to time T (or to blow-up), recording diagnostics.

    The dense sup-norm series is evaluated every step, over the full box and
    over the interior window shrunk by ``window_margin``; field snapshots are
    stored every cfg.snapshot_stride steps plus the initial and final states.
    """
    if not isinstance(u0, GridField):
        raise ParamError("u0 must be a GridField (use GridField.from_solution to lift)")
    if T <= u0.t:
        raise ConfigError("final time must exceed the initial time")
    dt = cfg.resolve_dt(u0.h, spec.k)
    if cfg.blowup_threshold <= u0.sup_norm():
        raise ConfigError("blow-up threshold must exceed the initial sup-norm")
    fld = replace(u0, values=u0.values.copy())
    times = [fld.t]
    sup_g = [fld.sup_norm()]
    sup_w = [fld.sup_norm(window_margin)]
    snapshots = [replace(fld, values=fld.values.copy())]
    n_steps = int(np.ceil((T - u0.t) / dt - 1e-12))
    blownup = False
    blow_t = None
    for j in range(1, n_steps + 1):
        step_cfg = cfg
        if j == n_steps:
            last = T - fld.t
            if last < dt * (1 - 1e-9):
                step_cfg = replace(cfg, dt=last)
        fld = step(fld, spec, step_cfg)
        if fld.blownup:
            blownup = True
            blow_t = fld.blowup_time
            break
        times.append(fld.t)
        sup_g.append(fld.sup_norm())
        sup_w.append(fld.sup_norm(window_margin))
        if j % cfg.snapshot_stride == 0 and j != n_steps:
            snapshots.append(replace(fld, values=fld.values.copy()))
    snapshots.append(replace(fld, values=fld.values.copy()))
    return Trajectory(np.asarray(times), np.asarray(sup_g), np.asarray(sup_w),
                      window_margin, snapshots, fld, blownup, blow_t)


# --- ordered-pair fuzzing ------------------------------------------------------

def _random_bumps(rng, pts, n_bumps, amp_lo, amp_hi, half_L):
    out = np.zeros(pts.shape[:-1])
    for _ in range(n_bumps):
        center = rng.uniform(-half_L, half_L, size=pts.shape[-1])
        sigma = rng.uniform(0.4, 1.2)
        amp = rng.uniform(amp_lo, amp_hi)
        out += amp * np.exp(-np.sum((pts - center) ** 2, axis=-1) / (2 * sigma**2))
    return out


def ordered_pair_generator(rng: np.random.Generator, N: int, L: float, m: int):
    """Yield (u0, v0) GridField pairs with u0 <= v0 pointwise, smooth bumps."""
    probe = GridField(N, L, m, np.zeros((m,) * N))
    pts = probe.points()
    while True:
        base = _random_bumps(rng, pts, 3, -0.3, 0.3, L / 2)
        gap = _random_bumps(rng, pts, 2, 0.05, 0.25, L / 2)
        yield (GridField(N, L, m, base), GridField(N, L, m, base + gap))


@dataclass
class ComparisonReport:
    trials: int
    worst_margin: float
    margins: list

    @property
    def scheme_tolerance(self) -> float:
        return self._tol

    _tol: float = field(default=0.0, repr=False)


def comparison_fuzz(pairs, spec: ProblemSpec, cfg: SchemeConfig, T: float,
                    trials: int) -> ComparisonReport:
    """Evolve ordered pairs and track the worst min(v - u) over grid and time.

    ``pairs`` is an iterable/generator of (u0, v0) GridFields with u0 <= v0.
    The reported scheme tolerance is h^2 (1 + T) sup|v0 - u0|, the size of the
    ordering defect an O(h^2) consistent scheme can accrue where v0 - u0
    touches zero.
    """
    margins = []
    tol = 0.0
    it = iter(pairs)
    for _ in range(trials):
        u0, v0 = next(it)
        diff0 = v0.values - u0.values
        if np.min(diff0) < 0:
            raise ParamError("pair generator produced an unordered pair")
        tol = max(tol, u0.h**2 * (1.0 + T) * float(np.max(np.abs(diff0))))
        dt = cfg.resolve_dt(u0.h, spec.k)
        n_steps = int(np.ceil((T - u0.t) / dt - 1e-12))
        fu, fv = u0, v0
        margin = float(np.min(diff0))
        for j in range(n_steps):
            fu = step(fu, spec, cfg)
            fv = step(fv, spec, cfg)
            if fu.blownup or fv.blownup:
                raise ParamError("comparison fuzz expects non-blowing configurations")
            margin = min(margin, float(np.min(fv.values - fu.values)))
        margins.append(margin)
    report = ComparisonReport(trials=trials, worst_margin=float(np.min(margins)), margins=margins)
    report._tol = tol
    return report


# --- serialization ---------------------------------------------------------------

def save_grid_csv(fields: list[GridField], path) -> None:
    """Snapshots as CSV rows t,x1,...,xN,value (one row per grid point)."""
    if not fields:
        raise ParamError("no fields to write")
    n = fields[0].N
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["t"] + [f"x{i + 1}" for i in range(n)] + ["value"])
        for fld in fields:
            pts = fld.points().reshape(-1, n)
            vals = fld.values.reshape(-1)
            for p, v in zip(pts, vals):
                writer.writerow([repr(float(fld.t))] + [repr(float(c)) for c in p] + [repr(float(v))])


_BLOCK_HEADER = struct.Struct("<iidd")  # N, m, L, t


def save_grid_block(fld: GridField, path) -> None:
    """Compact binary block: header (N, m, L, t) + raw little-endian doubles."""
    with open(path, "wb") as fh:
        fh.write(_BLOCK_HEADER.pack(fld.N, fld.m, fld.L, fld.t))
        fh.write(np.ascontiguousarray(fld.values, dtype="<f8").tobytes())


def load_grid_block(path) -> GridField:
    with open(path, "rb") as fh:
        n, m, L, t = _BLOCK_HEADER.unpack(fh.read(_BLOCK_HEADER.size))
        payload = np.frombuffer(fh.read(), dtype="<f8")
    if payload.size != m**n:
        raise ParamError(f"block payload has {payload.size} values, expected {m**n}")
    return GridField(n, L, m, payload.copy(), t)
