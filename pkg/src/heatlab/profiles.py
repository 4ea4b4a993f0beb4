"""Radial profiles g(r) on r >= 0, closed-form or tabulated, with derivatives.

Profiles serve both as initial data for the radial reductions and as the
one-dimensional building blocks of the closed-form solution families.  Every
profile evaluates vectorized over numpy arrays.
"""

from __future__ import annotations

import math
import re

import numpy as np

from .errors import ParamError, UnsupportedProfile


def _piecewise(s, mask, inside, outside=0.0):
    """Evaluate ``inside`` only where ``mask`` holds (avoids overflow outside)."""
    s = np.asarray(s, dtype=float)
    out = np.full(s.shape, outside, dtype=float)
    m = np.asarray(mask, dtype=bool)
    if np.any(m):
        out[m] = inside(s[m])
    if out.ndim == 0:
        return float(out)
    return out


class RadialProfile:
    """Scalar function of r >= 0 with first and second derivative access.

    ``support_radius`` is the exact radius of compact support (None if the
    profile does not vanish identically outside a ball); ``tail_radius`` is a
    radius beyond which the profile is numerically negligible (None for heavy
    tails / no decay).
    """

    name = "profile"
    support_radius: float | None = None
    tail_radius: float | None = None

    def value(self, r):
        raise NotImplementedError

    def d1(self, r):
        raise NotImplementedError

    def d2(self, r):
        raise NotImplementedError

    def require_compact(self) -> float:
        if self.support_radius is None:
            raise UnsupportedProfile(f"{self.name} is not compactly supported")
        return self.support_radius

    def __repr__(self):
        return f"<{type(self).__name__} {self.name}>"


class ClosedFormProfile(RadialProfile):
    """Profile given by value/derivative callables."""

    def __init__(self, value_fn, d1_fn, d2_fn, name="closed_form",
                 support_radius=None, tail_radius=None):
        self._v = value_fn
        self._d1 = d1_fn
        self._d2 = d2_fn
        self.name = name
        self.support_radius = support_radius
        self.tail_radius = tail_radius

    def value(self, r):
        return self._v(np.asarray(r, dtype=float))

    def d1(self, r):
        return self._d1(np.asarray(r, dtype=float))

    def d2(self, r):
        return self._d2(np.asarray(r, dtype=float))


class TableProfile(RadialProfile):
    """Profile sampled on a uniform r-grid starting at 0.

    Derivatives use centered 3-point stencils; at r = 0 the even symmetry
    g'(0) = 0 is imposed and g''(0) = 2(g(h) - g(0))/h^2.  Values between
    nodes are linearly interpolated; beyond the last node the profile is
    extended by its last value (or by 0 when declared compactly supported).
    """

    def __init__(self, r_grid, values, name="table", support_radius=None):
        r = np.asarray(r_grid, dtype=float)
        v = np.asarray(values, dtype=float)
        if r.ndim != 1 or r.shape != v.shape or r.size < 5:
            raise ParamError("table profile needs matching 1-d grids with >= 5 nodes")
        h = r[1] - r[0]
        if r[0] != 0.0 or not np.allclose(np.diff(r), h):
            raise ParamError("table grid must be uniform and start at r = 0")
        if not np.all(np.isfinite(v)):
            raise ParamError("table values must be finite")
        self.r = r
        self.v = v
        self.h = float(h)
        self.name = name
        self.support_radius = support_radius
        self._right = 0.0 if support_radius is not None else float(v[-1])
        d1 = np.empty_like(v)
        d1[1:-1] = (v[2:] - v[:-2]) / (2 * h)
        d1[0] = 0.0
        d1[-1] = (3 * v[-1] - 4 * v[-2] + v[-3]) / (2 * h)
        d2 = np.empty_like(v)
        d2[1:-1] = (v[2:] - 2 * v[1:-1] + v[:-2]) / h**2
        d2[0] = 2.0 * (v[1] - v[0]) / h**2
        d2[-1] = (2 * v[-1] - 5 * v[-2] + 4 * v[-3] - v[-4]) / h**2
        self._d1_tab = d1
        self._d2_tab = d2

    def _interp(self, r, table):
        r = np.asarray(r, dtype=float)
        out = np.interp(r, self.r, table, right=self._right if table is self.v else 0.0)
        if out.ndim == 0:
            return float(out)
        return out

    def value(self, r):
        return self._interp(r, self.v)

    def d1(self, r):
        return self._interp(r, self._d1_tab)

    def d2(self, r):
        return self._interp(r, self._d2_tab)


# --- library of closed-form profiles -----------------------------------------

def exp_quadratic(mu=1.0, k=1):
    """g(s) = mu * exp(-s^2 / (2k)); the eigenfunction-type datum."""
    if mu <= 0 or k < 1:
        raise ParamError("exp_quadratic needs mu > 0 and integer k >= 1")
    k = float(k)

    def v(s):
        return mu * np.exp(-(s**2) / (2 * k))

    def d1(s):
        return -(s / k) * v(s)

    def d2(s):
        return (s**2 / k**2 - 1.0 / k) * v(s)

    return ClosedFormProfile(v, d1, d2, name=f"exp_quadratic(mu={mu},k={k:g})",
                             tail_radius=10.0 * math.sqrt(k))


def gauss_kernel(a=1.0, k=1):
    """g(s) = (4 pi a)^(-k/2) exp(-s^2/(4a)); heat kernel slice at time a."""
    if a <= 0 or k < 1:
        raise ParamError("gauss_kernel needs a > 0 and integer k >= 1")
    amp = (4 * math.pi * a) ** (-k / 2.0)

    def v(s):
        return amp * np.exp(-(s**2) / (4 * a))

    def d1(s):
        return -(s / (2 * a)) * v(s)

    def d2(s):
        return (s**2 / (4 * a**2) - 1.0 / (2 * a)) * v(s)

    return ClosedFormProfile(v, d1, d2, name=f"gauss_kernel(a={a},k={k})",
                             tail_radius=14.0 * math.sqrt(a))


def power_tail(mu=1.0, beta=1.0, eps=1.0):
    """g(s) = mu * (eps + s^2)^(-beta), heavy algebraic tail."""
    if mu <= 0 or beta <= 0 or eps <= 0:
        raise ParamError("power_tail needs mu, beta, eps > 0")

    def v(s):
        return mu * (eps + s**2) ** (-beta)

    def d1(s):
        return -2 * beta * mu * s * (eps + s**2) ** (-beta - 1)

    def d2(s):
        u = eps + s**2
        return -2 * beta * mu * u ** (-beta - 2) * (u - 2 * (beta + 1) * s**2)

    return ClosedFormProfile(v, d1, d2, name=f"power_tail(mu={mu},beta={beta},eps={eps})")


def power_shift(mu=1.0, beta=1.0, eps=1.0):
    """g(s) = mu * (eps + s)^(-beta), nonincreasing and convex."""
    if mu <= 0 or beta <= 0 or eps <= 0:
        raise ParamError("power_shift needs mu, beta, eps > 0")

    def v(s):
        return mu * (eps + s) ** (-beta)

    def d1(s):
        return -beta * mu * (eps + s) ** (-beta - 1)

    def d2(s):
        return beta * (beta + 1) * mu * (eps + s) ** (-beta - 2)

    return ClosedFormProfile(v, d1, d2, name=f"power_shift(mu={mu},beta={beta},eps={eps})")


def exp_decay(mu=1.0):
    """g(s) = mu * exp(-s), nonincreasing and convex."""
    if mu <= 0:
        raise ParamError("exp_decay needs mu > 0")

    def v(s):
        return mu * np.exp(-s)

    return ClosedFormProfile(v, lambda s: -v(s), v, name=f"exp_decay(mu={mu})",
                             tail_radius=50.0)


def quenching():
    """The compactly supported datum exp(1/(s-1)) on [0,1), 0 beyond.

    Smooth up to the gluing radius s = 1 where the value and all one-sided
    derivatives vanish.
    """

    def v(s):
        return _piecewise(s, np.asarray(s) < 1.0, lambda z: np.exp(1.0 / (z - 1.0)))

    def d1(s):
        def inner(z):
            w = 1.0 / (z - 1.0)
            return -(w**2) * np.exp(w)

        return _piecewise(s, np.asarray(s) < 1.0, inner)

    def d2(s):
        def inner(z):
            w = 1.0 / (z - 1.0)
            return (w**4 + 2 * w**3) * np.exp(w)

        return _piecewise(s, np.asarray(s) < 1.0, inner)

    return ClosedFormProfile(v, d1, d2, name="quenching", support_radius=1.0,
                             tail_radius=1.0)


def compact_parabola(eps=1.0):
    """g(s) = (eps^2 - s^2)_+, the paraboloid cap."""
    if eps <= 0:
        raise ParamError("compact_parabola needs eps > 0")

    def v(s):
        return _piecewise(s, np.asarray(s) < eps, lambda z: eps**2 - z**2)

    def d1(s):
        return _piecewise(s, np.asarray(s) < eps, lambda z: -2.0 * z)

    def d2(s):
        return _piecewise(s, np.asarray(s) < eps, lambda z: np.full_like(z, -2.0))

    return ClosedFormProfile(v, d1, d2, name=f"compact_parabola(eps={eps})",
                             support_radius=float(eps), tail_radius=float(eps))


def step_indicator():
    """g = 1 on [0,1), 0 beyond; bounded but discontinuous (no derivatives)."""

    def v(s):
        return _piecewise(s, np.asarray(s) < 1.0, lambda z: np.ones_like(z))

    def no_deriv(_s):
        raise UnsupportedProfile("step profile has no pointwise derivatives")

    return ClosedFormProfile(v, no_deriv, no_deriv, name="step",
                             support_radius=1.0, tail_radius=1.0)


def constant(c=1.0):
    """g identically equal to c."""

    def v(s):
        return np.full_like(np.asarray(s, dtype=float), float(c))

    def zero(s):
        return np.zeros_like(np.asarray(s, dtype=float))

    return ClosedFormProfile(v, zero, zero, name=f"constant({c})")


_PROFILE_FACTORIES = {
    "exp_quadratic": exp_quadratic,
    "gauss_kernel": gauss_kernel,
    "power_tail": power_tail,
    "power_shift": power_shift,
    "exp_decay": exp_decay,
    "quenching": quenching,
    "compact_parabola": compact_parabola,
    "step": step_indicator,
    "constant": constant,
}

_ID_RE = re.compile(r"^([a-z_0-9]+)(?:\{(.*)\})?$")


def parse_params(body: str) -> dict:
    """Parse 'a=1,b=2.5' into {'a': 1.0, 'b': 2.5} (ints where exact)."""
    params = {}
    body = body.strip()
    if not body:
        return params
    for item in body.split(","):
        if "=" not in item:
            raise ParamError(f"malformed parameter {item!r} (expected key=value)")
        key, _, raw = item.partition("=")
        key = key.strip()
        raw = raw.strip()
        try:
            val = float(raw)
            if val.is_integer() and "." not in raw and "e" not in raw.lower():
                val = int(val)
        except ValueError:
            val = raw
        params[key] = val
    return params


def profile_from_id(profile_id: str, default_k: int | None = None) -> RadialProfile:
    """Build a library profile from a string id like 'exp_quadratic{mu=1,k=2}'."""
    m = _ID_RE.match(profile_id.strip())
    if not m:
        raise ParamError(f"unparseable profile id {profile_id!r}")
    name, body = m.group(1), m.group(2) or ""
    if name not in _PROFILE_FACTORIES:
        raise ParamError(f"unknown profile {name!r} (known: {sorted(_PROFILE_FACTORIES)})")
    params = parse_params(body)
    factory = _PROFILE_FACTORIES[name]
    if default_k is not None and name in ("exp_quadratic", "gauss_kernel") and "k" not in params:
        params["k"] = default_k
    try:
        return factory(**params)
    except TypeError:
        raise ParamError(f"bad parameters {sorted(params)} for profile {name!r}") from None
