"""Closed-form solution families for the truncated-Laplacian heat flows.

Each variant is an evaluable object carrying the ProblemSpec it solves; a
finite-difference residual checker verifies that each one satisfies its PDE,
and profile-condition checkers test the eigenvalue-ordering inequalities that
legitimize the radial reductions.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ParamError
from .profiles import RadialProfile, parse_params, quenching
from .spectral import MINUS, PLUS, ProblemSpec, SymMatrix, truncated_laplacian


def _sqnorm(x):
    return np.sum(np.asarray(x, dtype=float) ** 2, axis=-1)


def _scalarize(v):
    v = np.asarray(v)
    return float(v) if v.ndim == 0 else v


class ClosedFormSolution:
    """Base class: an exact solution u(t, x) of its spec's equation."""

    spec: ProblemSpec
    name = "solution"

    def value(self, t, x):
        """Evaluate u(t, x); x has shape (..., N).  Raises DomainError outside
        the variant's validity domain."""
        raise NotImplementedError

    def _check_time(self, t):
        if t < 0:
            raise DomainError(f"{self.name}: time must be >= 0, got {t}")

    def _check_x(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.spec.N:
            raise DomainError(f"{self.name}: points must have dimension {self.spec.N}")
        return x

    def residual_exclusion(self, t, x, h) -> bool:
        """True when (t, x) is within the non-smooth collar for this variant."""
        return False

    def __repr__(self):
        return f"<{type(self).__name__} {self.name} spec={self.spec}>"


def _require(cond, msg):
    if not cond:
        raise ParamError(msg)


def _require_pure_heat(spec, name):
    _require(not spec.has_reaction, f"{name} solves the pure heat flow; spec must have reaction_p=None")


def _require_transport_family(spec, name):
    _require(spec.sign == MINUS, f"{name} requires sign=minus")
    _require(spec.k < spec.N, f"{name} requires k < N (the reduction degenerates at k = N)")


# one-variable profiles for the single-axis families, by name
_ONE_VAR = {
    "cosh": (np.cosh, True),
    "neg_cosh": (lambda z: -np.cosh(z), False),
    "exp": (np.exp, True),
    "neg_exp": (lambda z: -np.exp(z), False),
    "quartic": (lambda z: z**4 + z**2, True),
    "neg_quartic": (lambda z: -(z**4 + z**2), False),
}


@dataclass
class OneVar(ClosedFormSolution):
    """u(t,x) = phi(x_i) with phi convex (minus flow) or concave (plus flow)."""

    spec: ProblemSpec
    axis: int = 0
    profile: str = "cosh"

    def __post_init__(self):
        _require_pure_heat(self.spec, "OneVar")
        _require(0 <= self.axis < self.spec.N, "axis out of range")
        _require(self.profile in _ONE_VAR, f"unknown one-variable profile {self.profile!r}")
        fn, convex = _ONE_VAR[self.profile]
        want_convex = self.spec.sign == MINUS
        _require(convex == want_convex,
                 f"profile {self.profile!r} has the wrong convexity for sign={self.spec.sign}")
        self._fn = fn
        self.name = f"one_var_{'convex' if convex else 'concave'}({self.profile},axis={self.axis})"

    def value(self, t, x):
        self._check_time(t)
        x = self._check_x(x)
        return _scalarize(self._fn(x[..., self.axis]))


@dataclass
class TravellingWave(ClosedFormSolution):
    """Planar wave u = alpha -/+ beta exp(-c (x_i - c t)) along one axis."""

    spec: ProblemSpec
    axis: int = 0
    alpha: float = 0.0
    beta: float = 1.0
    c: float = 1.0

    def __post_init__(self):
        _require_pure_heat(self.spec, "TravellingWave")
        _require(0 <= self.axis < self.spec.N, "axis out of range")
        _require(self.beta > 0, "beta must be positive")
        _require(self.c != 0, "speed c must be nonzero")
        self.name = f"travelling_wave(axis={self.axis},alpha={self.alpha},beta={self.beta},c={self.c})"

    def value(self, t, x):
        self._check_time(t)
        x = self._check_x(x)
        z = x[..., self.axis] - self.c * t
        bump = self.beta * np.exp(-self.c * z)
        if self.spec.sign == MINUS:
            return _scalarize(self.alpha - bump)
        return _scalarize(self.alpha + bump)


@dataclass
class Polynomial(ClosedFormSolution):
    """u = F(A) t + (x-x0).A(x-x0)/2 + (x-x0).y + C; constant-in-space drift."""

    spec: ProblemSpec
    A: SymMatrix = None
    x0: np.ndarray = None
    y: np.ndarray = None
    C: float = 0.0

    def __post_init__(self):
        _require_pure_heat(self.spec, "Polynomial")
        _require(self.A is not None and self.A.n == self.spec.N, "A must be SymMatrix of dimension N")
        self.x0 = np.zeros(self.spec.N) if self.x0 is None else np.asarray(self.x0, dtype=float)
        self.y = np.zeros(self.spec.N) if self.y is None else np.asarray(self.y, dtype=float)
        _require(self.x0.shape == (self.spec.N,) and self.y.shape == (self.spec.N,),
                 "x0 and y must be N-vectors")
        self.drift = truncated_laplacian(self.A, self.spec)
        self.name = "polynomial"

    def value(self, t, x):
        self._check_time(t)
        x = self._check_x(x)
        d = x - self.x0
        quad = 0.5 * np.einsum("...i,ij,...j", d, self.A.a, d)
        return _scalarize(self.drift * t + quad + d @ self.y + self.C)

    @staticmethod
    def seeded(spec: ProblemSpec, seed: int = 7) -> "Polynomial":
        """Deterministic random coefficients; used by the CLI catalog ids."""
        rng = np.random.default_rng(seed)
        m = rng.normal(size=(spec.N, spec.N))
        return Polynomial(spec, A=SymMatrix(m), x0=rng.normal(size=spec.N),
                          y=rng.normal(size=spec.N), C=float(rng.normal()))


@dataclass
class SelfSimilarMinus(ClosedFormSolution):
    """u = mu (|x|^2 + 2kt + eps)^(-beta); algebraic-decay self-similar family.

    eps = 0 is admitted only away from the space-time origin, where the
    formula is singular.
    """

    spec: ProblemSpec
    beta: float = 1.0
    mu: float = 1.0
    eps: float = 0.0

    def __post_init__(self):
        _require_pure_heat(self.spec, "SelfSimilarMinus")
        _require_transport_family(self.spec, "SelfSimilarMinus")
        _require(self.beta > 0, "beta must be positive")
        _require(self.mu > 0, "mu must be positive")
        _require(self.eps >= 0, "eps must be nonnegative")
        self.name = f"self_similar_minus(beta={self.beta},mu={self.mu},eps={self.eps})"

    def value(self, t, x):
        self._check_time(t)
        x = self._check_x(x)
        base = _sqnorm(x) + 2 * self.spec.k * t + self.eps
        if np.any(base <= 0.0):
            raise DomainError("self-similar solution with eps=0 is singular at t=0, x=0")
        return _scalarize(self.mu * base ** (-self.beta))


@dataclass
class GaussianPlus(ClosedFormSolution):
    """u = mu t^(-k/2) exp(-|x|^2/(4t)); the lower-dimensional heat kernel."""

    spec: ProblemSpec
    mu: float = 1.0

    def __post_init__(self):
        _require(self.spec.sign == PLUS, "GaussianPlus requires sign=plus")
        _require_pure_heat(self.spec, "GaussianPlus")
        _require(self.mu > 0, "mu must be positive")
        self.name = f"gaussian_plus(mu={self.mu})"

    def value(self, t, x):
        if t <= 0:
            raise DomainError("gaussian_plus is defined for t > 0 only")
        x = self._check_x(x)
        return _scalarize(self.mu * t ** (-self.spec.k / 2.0) * np.exp(-_sqnorm(x) / (4 * t)))


@dataclass
class ShiftedGaussianPlus(ClosedFormSolution):
    """u = (4 pi (a+t))^(-k/2) exp(-|x|^2/(4(a+t))); kernel started at time a."""

    spec: ProblemSpec
    a: float = 1.0

    def __post_init__(self):
        _require(self.spec.sign == PLUS, "ShiftedGaussianPlus requires sign=plus")
        _require_pure_heat(self.spec, "ShiftedGaussianPlus")
        _require(self.a > 0, "a must be positive")
        self.name = f"shifted_gaussian_plus(a={self.a})"

    def value(self, t, x):
        self._check_time(t)
        x = self._check_x(x)
        tau = self.a + t
        k = self.spec.k
        return _scalarize((4 * math.pi * tau) ** (-k / 2.0) * np.exp(-_sqnorm(x) / (4 * tau)))


@dataclass
class RadialTransportMinus(ClosedFormSolution):
    """u(t,x) = g(sqrt(2kt + |x|^2)): the minus flow transports radial data."""

    spec: ProblemSpec
    g: RadialProfile = None

    def __post_init__(self):
        _require_pure_heat(self.spec, "RadialTransportMinus")
        _require_transport_family(self.spec, "RadialTransportMinus")
        _require(self.g is not None, "a radial profile g is required")
        self.name = f"radial_transport_minus({self.g.name})"

    def value(self, t, x):
        self._check_time(t)
        x = self._check_x(x)
        s = np.sqrt(2 * self.spec.k * t + _sqnorm(x))
        return _scalarize(self.g.value(s))


class QuenchingProfileMinus(RadialTransportMinus):
    """Transport of the quenching datum; extinguishes once 2kt >= 1."""

    def __init__(self, spec: ProblemSpec):
        super().__init__(spec, g=quenching())
        self.name = "quenching_minus"

    def residual_exclusion(self, t, x, h) -> bool:
        # the gluing sphere 2kt + |x|^2 = 1 is only C^infinity by one-sided
        # limits; keep a collar of 10h around it
        s2 = 2 * self.spec.k * t + _sqnorm(x)
        return bool(np.any(np.abs(s2 - 1.0) <= 10 * h))


@dataclass
class SeparatedExponentialMinus(ClosedFormSolution):
    """u = mu e^(-t) e^(-|x|^2/(2k)); separated eigenfunction solution."""

    spec: ProblemSpec
    mu: float = 1.0

    def __post_init__(self):
        _require_pure_heat(self.spec, "SeparatedExponentialMinus")
        _require_transport_family(self.spec, "SeparatedExponentialMinus")
        _require(self.mu > 0, "mu must be positive")
        self.name = f"separated_exponential_minus(mu={self.mu})"

    def value(self, t, x):
        self._check_time(t)
        x = self._check_x(x)
        return _scalarize(self.mu * math.exp(-t) * np.exp(-_sqnorm(x) / (2 * self.spec.k)))


@dataclass
class StationaryMinus(ClosedFormSolution):
    """u = (2k / (p (mu + |x|^2)))^(1/p), stationary for the minus reaction flow."""

    spec: ProblemSpec
    p: float = 1.0
    mu: float = 1.0

    def __post_init__(self):
        _require_transport_family(self.spec, "StationaryMinus")
        _require(self.p > 0, "p must be positive")
        _require(self.mu > 0, "mu must be positive")
        _require(self.spec.has_reaction and self.spec.reaction_p == self.p,
                 "spec must carry reaction_p equal to the profile's p")
        self.name = f"stationary_minus(p={self.p},mu={self.mu})"

    def value(self, t, x):
        self._check_time(t)
        x = self._check_x(x)
        return _scalarize((2 * self.spec.k / (self.p * (self.mu + _sqnorm(x)))) ** (1.0 / self.p))


# --- residual checker ---------------------------------------------------------

def pde_residual(sol: ClosedFormSolution, t: float, x, h: float) -> float:
    """Finite-difference residual of the variant's PDE at (t, x).

    Central differences of spacing h in space and time: the time slope is
    compared against the truncated Laplacian of the sampled discrete Hessian,
    plus the u^(1+p) source when the spec carries a reaction.  O(h^2) at
    points where the solution is smooth.
    """
    if h <= 0:
        raise ParamError("step h must be positive")
    if t <= h:
        raise DomainError("need t > h for the centered time difference")
    x = np.asarray(x, dtype=float)
    if x.shape != (sol.spec.N,):
        raise DomainError(f"residual is pointwise; expected a single {sol.spec.N}-vector")
    if sol.residual_exclusion(t, x, h):
        raise DomainError(f"{sol.name}: point within the non-smooth collar")
    n = sol.spec.N
    u0 = sol.value(t, x)
    dudt = (sol.value(t + h, x) - sol.value(t - h, x)) / (2 * h)
    hess = np.empty((n, n))
    for i in range(n):
        ei = np.zeros(n)
        ei[i] = h
        hess[i, i] = (sol.value(t, x + ei) - 2 * u0 + sol.value(t, x - ei)) / h**2
        for j in range(i + 1, n):
            ej = np.zeros(n)
            ej[j] = h
            hess[i, j] = hess[j, i] = (
                sol.value(t, x + ei + ej) + sol.value(t, x - ei - ej)
                - sol.value(t, x + ei - ej) - sol.value(t, x - ei + ej)
            ) / (4 * h**2)
    f = truncated_laplacian(SymMatrix(hess), sol.spec)
    source = u0 ** (1.0 + sol.spec.reaction_p) if sol.spec.has_reaction else 0.0
    return float(dudt - f - source)


def sample_smooth_points(sol: ClosedFormSolution, rng: np.random.Generator,
                         count: int, h: float):
    """Random (t, x) in the variant's validity domain, away from known
    non-smooth sets; used by the residual convergence studies."""
    pts = []
    n = sol.spec.N
    needs_positive_time = isinstance(sol, GaussianPlus)
    is_quenching = isinstance(sol, QuenchingProfileMinus)
    while len(pts) < count:
        if is_quenching:
            t = rng.uniform(0.05, 0.3)
            x = rng.uniform(-0.9, 0.9, size=n)
        else:
            t = rng.uniform(0.4, 1.4)
            x = rng.uniform(-1.5, 1.5, size=n)
        if needs_positive_time and t <= 2 * h:
            continue
        if sol.residual_exclusion(t, x, 2 * h):
            continue
        pts.append((t, x))
    return pts


def residual_convergence(sol: ClosedFormSolution, rng: np.random.Generator,
                         count: int = 100, h: float = 2e-3, floor: float = 1e-8):
    """Max |residual| at spacings h and h/2 over ``count`` random smooth points.

    Returns (res_h, res_h2, slope).  A variant that is exact up to roundoff
    (residuals below ``floor`` at both spacings, the roundoff level of the
    h^-2 stencils) reports slope = inf instead of a meaningless ratio.
    """
    pts = sample_smooth_points(sol, rng, count, h)
    r1 = max(abs(pde_residual(sol, t, x, h)) for t, x in pts)
    r2 = max(abs(pde_residual(sol, t, x, h / 2)) for t, x in pts)
    if r1 <= floor and r2 <= floor:
        return r1, r2, float("inf")
    slope = math.log2(r1 / r2) if r2 > 0 else float("inf")
    return r1, r2, slope


# --- profile condition checkers ----------------------------------------------

HYP_SELF = "hyp_self"
HYP_CI = "hyp_CI"
REVERSE = "reverse"


def check_profile_condition(g: RadialProfile, r_grid, which: str = HYP_CI):
    """Points of ``r_grid`` where the eigenvalue-ordering condition fails.

    ``hyp_self`` and ``hyp_CI`` both test g''(r) - g'(r)/r >= -tol with
    tol = 1e-9 (1 + |g''|); ``reverse`` tests the <= variant.  Returns the
    violating radii (empty array when the condition holds everywhere).
    """
    if which not in (HYP_SELF, HYP_CI, REVERSE):
        raise ParamError(f"unknown condition {which!r}")
    r = np.asarray(r_grid, dtype=float)
    if np.any(r <= 0):
        raise ParamError("conditions are stated for r > 0; grid must be positive")
    d2 = np.asarray(g.d2(r), dtype=float)
    d1 = np.asarray(g.d1(r), dtype=float)
    defect = d2 - d1 / r
    tol = 1e-9 * (1.0 + np.abs(d2))
    if which == REVERSE:
        bad = defect > tol
    else:
        bad = defect < -tol
    return r[bad]


# --- string-id registry --------------------------------------------------------

_SOL_ID_RE = re.compile(r"^([a-z_0-9]+)(?:\{(.*)\})?$")


def solution_from_id(sol_id: str, spec: ProblemSpec) -> ClosedFormSolution:
    """Build a catalog variant from an id like 'self_similar_minus{beta=1,mu=1,eps=0}'."""
    m = _SOL_ID_RE.match(sol_id.strip())
    if not m:
        raise ParamError(f"unparseable solution id {sol_id!r}")
    name, body = m.group(1), m.group(2) or ""
    params = parse_params(body)

    def done(sol):
        if params:
            raise ParamError(f"unknown parameters for {name!r}: {sorted(params)}")
        return sol

    if name == "one_var_convex":
        return done(OneVar(spec, axis=int(params.pop("axis", 0)),
                           profile=str(params.pop("profile", "cosh"))))
    if name == "one_var_concave":
        return done(OneVar(spec, axis=int(params.pop("axis", 0)),
                           profile=str(params.pop("profile", "neg_cosh"))))
    if name == "travelling_wave":
        return done(TravellingWave(spec, axis=int(params.pop("axis", 0)),
                                   alpha=float(params.pop("alpha", 0.0)),
                                   beta=float(params.pop("beta", 1.0)),
                                   c=float(params.pop("c", 1.0))))
    if name == "polynomial":
        return done(Polynomial.seeded(spec, seed=int(params.pop("seed", 7))))
    if name == "self_similar_minus":
        return done(SelfSimilarMinus(spec, beta=float(params.pop("beta", 1.0)),
                                     mu=float(params.pop("mu", 1.0)),
                                     eps=float(params.pop("eps", 0.0))))
    if name == "gaussian_plus":
        return done(GaussianPlus(spec, mu=float(params.pop("mu", 1.0))))
    if name == "shifted_gaussian_plus":
        return done(ShiftedGaussianPlus(spec, a=float(params.pop("a", 1.0))))
    if name == "radial_transport_minus":
        from .profiles import profile_from_id

        pid = str(params.pop("profile", "exp_decay"))
        if params:  # remaining keys are the profile's own parameters
            pid = pid + "{" + ",".join(f"{k}={v}" for k, v in params.items()) + "}"
            params = {}
        return done(RadialTransportMinus(spec, g=profile_from_id(pid, default_k=spec.k)))
    if name == "separated_exponential_minus":
        return done(SeparatedExponentialMinus(spec, mu=float(params.pop("mu", 1.0))))
    if name == "quenching_minus":
        return done(QuenchingProfileMinus(spec))
    if name == "stationary_minus":
        return done(StationaryMinus(spec, p=float(params.pop("p", 1.0)),
                                    mu=float(params.pop("mu", 1.0))))
    raise ParamError(f"unknown catalog id {name!r}")
