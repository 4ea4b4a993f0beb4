"""Reduced one-dimensional solvers for radial data.

The minus flow transports radial data exactly along characteristics; the plus
flow agrees with the k-dimensional heat semigroup, evaluated here as a radial
quadrature with closed-form angular factors for k <= 3 and sphere quadrature
beyond.  A convexity checker certifies (or falsifies) on sampled windows the
eigenvalue-ordering condition that legitimizes both reductions.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.special import gamma, ive

from .errors import DivergentMass, DomainError, ParamError, QuadratureUnderresolved
from .profiles import RadialProfile
from .spectral import MINUS, ProblemSpec

@lru_cache(maxsize=32)
def _gauss_nodes(n: int):
    """Gauss-Legendre nodes/weights on [-1, 1]; cached, leggauss is O(n^2)."""
    y, w = leggauss(n)
    y.setflags(write=False)
    w.setflags(write=False)
    return y, w


CLOSED_FORM_K1 = "closed_form_k1"
CLOSED_FORM_K2 = "closed_form_k2"
CLOSED_FORM_K3 = "closed_form_k3"
GENERIC_SPHERE = "generic_sphere_quadrature"
AUTO = "auto"


@dataclass
class RadialField:
    """Radial slice psi(t, r) sampled on a uniform grid."""

    t: float
    r_grid: np.ndarray
    values: np.ndarray
    spec: ProblemSpec | None = None

    def __post_init__(self):
        self.r_grid = np.asarray(self.r_grid, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.r_grid.ndim != 1 or self.r_grid.shape != self.values.shape:
            raise ParamError("r_grid and values must be matching 1-d arrays")
        if not np.all(np.diff(self.r_grid) > 0):
            raise ParamError("r_grid must be strictly increasing")
        if not np.all(np.isfinite(self.values)):
            raise ParamError("radial field values must be finite")


@dataclass
class KernelConfig:
    """Quadrature controls for the k-dimensional kernel convolution."""

    nodes: int = 2048
    r_cutoff: float | None = None
    angular: str = AUTO
    angular_nodes: int = 64

    def __post_init__(self):
        if self.nodes < 64:
            raise ParamError("node count must be >= 64")
        if self.r_cutoff is not None and self.r_cutoff <= 0:
            raise ParamError("radial cutoff must be positive")
        if self.angular not in (AUTO, CLOSED_FORM_K1, CLOSED_FORM_K2, CLOSED_FORM_K3, GENERIC_SPHERE):
            raise ParamError(f"unknown angular method {self.angular!r}")
        if self.angular_nodes < 16:
            raise ParamError("angular node count must be >= 16")


def transport_solve(g: RadialProfile, spec: ProblemSpec, t: float, r):
    """psi(t, r) = g(sqrt(2kt + r^2)) for the minus flow; exact up to g itself."""
    if spec.sign != MINUS:
        raise ParamError("transport_solve applies to the minus operator only")
    if spec.k >= spec.N:
        raise ParamError("transport reduction requires k < N")
    if t < 0:
        raise ParamError("time must be >= 0")
    r = np.asarray(r, dtype=float)
    out = g.value(np.sqrt(2 * spec.k * t + r**2))
    return out


def quench_time(g: RadialProfile, spec: ProblemSpec) -> float:
    """Extinction time rho^2 / (2k) of compactly supported minus-flow data.

    transport_solve vanishes identically from this time on.  Raises
    UnsupportedProfile when g has no compact support.
    """
    if spec.sign != MINUS:
        raise ParamError("quenching is a minus-flow phenomenon")
    rho = g.require_compact()
    return rho**2 / (2.0 * spec.k)


def _cutoff(g: RadialProfile, t: float, r_max: float, cfg: KernelConfig) -> float:
    if cfg.r_cutoff is not None:
        return cfg.r_cutoff
    reach = r_max + 12.0 * math.sqrt(t)
    extent = g.support_radius if g.support_radius is not None else g.tail_radius
    if extent is not None:
        # nothing (or nothing above roundoff) lives beyond the data extent
        return min(extent, reach) if extent < reach else reach
    return reach


def _angular_weight(k: int, method: str, r, rho, t: float, angular_nodes: int):
    """Angular integral over the sphere S^{k-1}, scaled by e^{-(r^2+rho^2)/4t}.

    Returns W with W[i, j] = integral over the sphere of
    exp(-|r_i omega - y|^2 / 4t) restricted to |y| = rho_j, i.e. the full
    kernel weight against surface measure.
    """
    rr = r[:, None]
    pp = rho[None, :]
    base = np.exp(-((rr - pp) ** 2) / (4 * t))
    z = rr * pp / (2 * t)
    if k == 1 or method == CLOSED_FORM_K1:
        # S^0 = two points
        return base + np.exp(-((rr + pp) ** 2) / (4 * t))
    if method == CLOSED_FORM_K2:
        return 2 * math.pi * base * ive(0, z)
    if method == CLOSED_FORM_K3:
        # 2 pi (e^z - e^-z)/z, folded with the radial Gaussian for stability
        with np.errstate(divide="ignore", invalid="ignore"):
            factor = np.where(z > 1e-12, -np.expm1(-2 * z) / np.where(z > 0, z, 1.0), 2.0 - 2.0 * z)
        return 2 * math.pi * base * factor
    # generic sphere quadrature: |S^{k-2}| int_0^pi e^{z cos(theta) - z} sin^{k-2}(theta) dtheta
    theta, w = _gauss_nodes(angular_nodes)
    theta = 0.5 * math.pi * (theta + 1.0)
    w = 0.5 * math.pi * w
    surf = 2 * math.pi ** ((k - 1) / 2.0) / gamma((k - 1) / 2.0)
    ct = np.cos(theta)
    st = np.sin(theta) ** (k - 2)
    # z (1 - cos theta) >= 0 keeps every exponent <= 0
    expo = np.exp(-z[..., None] * (1.0 - ct))
    ang = np.sum(expo * (st * w), axis=-1)
    return surf * base * ang


def _convolve_once(g, k, t, r, nodes, angular_nodes, method, cutoff):
    y, w = _gauss_nodes(nodes)
    rho = 0.5 * cutoff * (y + 1.0)
    w = 0.5 * cutoff * w
    gvals = np.asarray(g.value(rho), dtype=float)
    kernel = _angular_weight(k, method, r, rho, t, angular_nodes)
    radial = gvals * rho ** (k - 1) * w
    return (4 * math.pi * t) ** (-k / 2.0) * kernel @ radial


def heat_convolve_k(g: RadialProfile, k: int, t: float, r, cfg: KernelConfig | None = None):
    """psi(t, r): convolution of radial data with the k-dimensional heat kernel.

    k = 1 uses the two-sided 1-d reduction, k = 2 the Bessel-I0 angular factor
    (exponentially scaled), k = 3 the sinh reduction, larger k product
    Gauss-Legendre on the sphere.  The quadrature is evaluated at the
    configured node count and at double resolution; disagreement beyond 1e-6
    relative raises QuadratureUnderresolved.
    """
    if t <= 0:
        raise ParamError("convolution requires t > 0")
    if k < 1:
        raise ParamError("k must be >= 1")
    cfg = cfg or KernelConfig()
    method = cfg.angular
    if method == AUTO:
        method = {1: CLOSED_FORM_K1, 2: CLOSED_FORM_K2, 3: CLOSED_FORM_K3}.get(k, GENERIC_SPHERE)
    r_arr = np.atleast_1d(np.asarray(r, dtype=float))
    if np.any(r_arr < 0):
        raise ParamError("radii must be >= 0")
    cutoff = _cutoff(g, t, float(np.max(r_arr)), cfg)
    psi1 = _convolve_once(g, k, t, r_arr, cfg.nodes, cfg.angular_nodes, method, cutoff)
    psi2 = _convolve_once(g, k, t, r_arr, 2 * cfg.nodes, 2 * cfg.angular_nodes, method, cutoff)
    gmax = float(np.max(np.abs(psi2))) if psi2.size else 0.0
    tol = 1e-6 * (np.abs(psi2) + 1e-9 * gmax + 1e-300)
    if np.any(np.abs(psi2 - psi1) > tol):
        worst = float(np.max(np.abs(psi2 - psi1)))
        raise QuadratureUnderresolved(
            f"node doubling {cfg.nodes}->{2 * cfg.nodes} changed psi by {worst:.3e}")
    out = psi2
    if np.ndim(r) == 0:
        return float(out[0])
    return out


def convolution_series(g: RadialProfile, k: int, t_values, r_grid,
                       cfg: KernelConfig | None = None,
                       spec: ProblemSpec | None = None) -> list[RadialField]:
    """Evaluate the plus-flow reduction on a (t, r) window as RadialFields."""
    r_grid = np.asarray(r_grid, dtype=float)
    return [RadialField(float(t), r_grid, heat_convolve_k(g, k, float(t), r_grid, cfg), spec)
            for t in t_values]


# --- convexity certification ---------------------------------------------------

@dataclass
class ConvexityReport:
    """Outcome of the eigenvalue-ordering check on a sampled (t, r) window."""

    violations: list = field(default_factory=list)  # (t, r, defect) triples
    n_cells: int = 0
    worst_defect: float = 0.0

    @property
    def certified(self) -> bool:
        return not self.violations

    def violation_near(self, t: float, r: float, t_tol: float = 1e-9, r_tol: float = 1e-9) -> bool:
        return any(abs(vt - t) <= t_tol and abs(vr - r) <= r_tol for vt, vr, _ in self.violations)


def check_convexity_condition(series: list[RadialField], tol_rel: float = 1e-7) -> ConvexityReport:
    """Flag cells where d_rr psi < d_r psi / r beyond tolerance.

    Derivatives use centered 3-point stencils on the uniform r grid.  The
    tolerance is tol_rel scaled by the local derivative magnitudes plus a
    Richardson estimate of the stencil truncation error (difference between
    the h and 2h stencils), so that a genuinely nonnegative defect is not
    flagged on coarse grids.  The first cells r < 2h are excluded: the 1/r
    factor amplifies stencil noise there and the condition is stated for
    r > 0.
    """
    report = ConvexityReport()
    worst = np.inf
    for fld in series:
        r = fld.r_grid
        v = fld.values
        h = r[1] - r[0]
        if not np.allclose(np.diff(r), h):
            raise ParamError("convexity check needs a uniform r grid")
        n = r.size
        if n < 7:
            raise ParamError("grid too coarse for 3-point stencils with Richardson estimates")
        d1 = np.full(n, np.nan)
        d2 = np.full(n, np.nan)
        d1[1:-1] = (v[2:] - v[:-2]) / (2 * h)
        d2[1:-1] = (v[2:] - 2 * v[1:-1] + v[:-2]) / h**2
        d1w = np.full(n, np.nan)
        d2w = np.full(n, np.nan)
        d1w[2:-2] = (v[4:] - v[:-4]) / (4 * h)
        d2w[2:-2] = (v[4:] - 2 * v[2:-2] + v[:-4]) / (2 * h) ** 2
        inner = slice(2, n - 2)
        rr = r[inner]
        keep = rr >= 2 * h
        rr = rr[keep]
        defect = (d2[inner] - d1[inner] / r[inner])[keep]
        err = (np.abs(d2[inner] - d2w[inner]) / 3.0
               + np.abs(d1[inner] - d1w[inner]) / (3.0 * r[inner]))[keep]
        scale = (1.0 + np.abs(d2[inner]) + np.abs(d1[inner] / r[inner]))[keep]
        tol = tol_rel * scale + 4.0 * err
        bad = defect < -tol
        report.n_cells += int(rr.size)
        if defect.size:
            worst = min(worst, float(np.min(defect)))
        for rb, db in zip(rr[bad], defect[bad]):
            report.violations.append((fld.t, float(rb), float(db)))
    report.worst_defect = worst if np.isfinite(worst) else 0.0
    return report


# --- masses and asymptotics -----------------------------------------------------

def sphere_area(dim: int) -> float:
    """Surface area of the unit sphere S^{dim-1} in R^dim."""
    return 2 * math.pi ** (dim / 2.0) / gamma(dim / 2.0)


def radial_mass(fn, dim: int, r_max: float, nodes: int = 4096) -> float:
    """integral over R^dim of the radial function fn(|x|), truncated at r_max."""
    y, w = _gauss_nodes(nodes)
    rho = 0.5 * r_max * (y + 1.0)
    w = 0.5 * r_max * w
    vals = np.asarray(fn(rho), dtype=float)
    return float(sphere_area(dim) * np.sum(vals * rho ** (dim - 1) * w))


def profile_moment(g: RadialProfile, k: int, order: int = 0) -> float:
    """integral over R^k of |x|^order g(|x|) dx, with divergence detection.

    Doubles the truncation radius until two increments fall below 1e-9
    relative; raises DivergentMass when no convergence by radius 2^16.
    """
    extent = g.support_radius or g.tail_radius
    if g.support_radius is not None:
        return radial_mass(lambda s: g.value(s) * s**order, k, g.support_radius)
    r_max = extent or 8.0
    total = radial_mass(lambda s: g.value(s) * s**order, k, r_max)
    small_steps = 0
    while r_max <= 65536.0:
        r_next = 2 * r_max
        total_next = radial_mass(lambda s: g.value(s) * s**order, k, r_next)
        inc = abs(total_next - total)
        total, r_max = total_next, r_next
        if inc <= 1e-9 * (abs(total) + 1e-300):
            small_steps += 1
            if small_steps >= 2:
                return total
        else:
            small_steps = 0
    raise DivergentMass(f"moment of order {order} of {g.name} in dimension {k} does not converge")


def asymptotic_profile_gap(g: RadialProfile, k: int, t: float,
                           cfg: KernelConfig | None = None, r_points: int = 400) -> float:
    """t^(k/2) sup_r |psi(t,r) - g0 G_k(t,r)| against the mass-matched kernel.

    g0 is the R^k mass of the data; requires finite mass and first moment
    (DivergentMass otherwise) and g0 > 0.
    """
    if t <= 0:
        raise ParamError("gap is defined for t > 0")
    g0 = profile_moment(g, k, order=0)
    profile_moment(g, k, order=1)  # finiteness required by the asymptotics
    if g0 <= 0:
        raise DomainError("asymptotic profile comparison needs nontrivial data, g0 > 0")
    extent = g.support_radius or g.tail_radius or 5.0
    r = np.linspace(0.0, extent + 10.0 * math.sqrt(t), r_points)
    psi = heat_convolve_k(g, k, t, r, cfg)
    kernel = g0 * (4 * math.pi * t) ** (-k / 2.0) * np.exp(-(r**2) / (4 * t))
    return float(t ** (k / 2.0) * np.max(np.abs(psi - kernel)))


# --- serialization ----------------------------------------------------------------

def save_series_csv(series: list[RadialField], path) -> None:
    """Write a radial time-series as CSV with columns t,r,value."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["t", "r", "value"])
        for fld in series:
            for r, v in zip(fld.r_grid, fld.values):
                writer.writerow([repr(float(fld.t)), repr(float(r)), repr(float(v))])


def load_series_csv(path) -> list[RadialField]:
    """Read back a t,r,value series written by :func:`save_series_csv`."""
    rows = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != ["t", "r", "value"]:
            raise ParamError(f"unexpected series header {header}")
        for t_s, r_s, v_s in reader:
            rows.setdefault(float(t_s), []).append((float(r_s), float(v_s)))
    series = []
    for t in sorted(rows):
        pts = sorted(rows[t])
        series.append(RadialField(t, [p[0] for p in pts], [p[1] for p in pts]))
    return series
