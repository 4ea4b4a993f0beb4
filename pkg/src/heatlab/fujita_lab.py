"""Reaction-flow laboratory: global-existence envelopes, the Jensen ODE bound,
and empirical bracketing of the critical reaction exponent.

The minus flow admits global solutions for every p > 0 (critical exponent 0);
the plus flow blows up systematically for p < 2/k and admits small-data global
solutions for p > 2/k.  Envelopes are the explicit supersolution sup-norm
bounds; the sweep classifies trajectories and reports a bracket, never a
fitted critical value.
"""

from __future__ import annotations

import csv
import math
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import ParamError
from .grid_solver import GridField, SchemeConfig, Trajectory, solve
from .profiles import RadialProfile, compact_parabola, exp_quadratic, gauss_kernel, parse_params, power_tail
from .spectral import MINUS, PLUS, ProblemSpec

BLOW_UP = "BlowUp"
GLOBAL_DECAY = "GlobalDecay"
UNDECIDED = "Undecided"

# trajectories whose last-decade log-log sup slope exceeds this are Undecided
DECAY_SLOPE_THRESHOLD = -0.05


# --- envelopes -----------------------------------------------------------------

class Envelope:
    """Explicit sup-norm bound B(t) certifying a global solution regime."""

    spec: ProblemSpec

    def bound(self, t):
        raise NotImplementedError

    def f(self, t):
        """Supersolution amplitude factor from the comparison construction."""
        raise NotImplementedError

    def initial_profile(self) -> RadialProfile:
        """The extremal radial datum the envelope dominates."""
        raise NotImplementedError


@dataclass
class LightTailMinus(Envelope):
    """Data below C e^(-|x|^2/(2k)), 0 < C <= 1: global, decays like e^-t."""

    spec: ProblemSpec
    C: float
    p: float

    def __post_init__(self):
        if self.spec.sign != MINUS or self.spec.reaction_p != self.p:
            raise ParamError("LightTailMinus needs a minus spec with reaction_p == p")
        if not 0 < self.C <= 1:
            raise ParamError("LightTailMinus requires 0 < C <= 1")
        if self.p <= 0:
            raise ParamError("reaction exponent p must be positive")

    def f(self, t):
        t = np.asarray(t, dtype=float)
        return (1.0 + self.C**self.p * (np.exp(-self.p * t) - 1.0)) ** (-1.0 / self.p)

    def bound(self, t):
        t = np.asarray(t, dtype=float)
        if self.C == 1.0:
            out = np.full(t.shape, self.C)
            return float(out) if out.ndim == 0 else out
        out = self.C / (1.0 - self.C**self.p) ** (1.0 / self.p) * np.exp(-t)
        return float(out) if out.ndim == 0 else out

    def initial_profile(self) -> RadialProfile:
        return exp_quadratic(mu=self.C, k=self.spec.k)


@dataclass
class HeavyTailMinus(Envelope):
    """Data below C (|x|^2 + eps)^(-beta) with p beta > 1 and small C: global."""

    spec: ProblemSpec
    C: float
    eps: float
    beta: float
    p: float

    def __post_init__(self):
        if self.spec.sign != MINUS or self.spec.reaction_p != self.p:
            raise ParamError("HeavyTailMinus needs a minus spec with reaction_p == p")
        if self.C <= 0 or self.eps <= 0 or self.beta <= 0:
            raise ParamError("C, eps, beta must be positive")
        if self.p * self.beta <= 1:
            raise ParamError("HeavyTailMinus requires p*beta > 1")
        k = self.spec.k
        lhs = self.C**self.p / self.eps ** (self.p * self.beta - 1)
        rhs = 2 * k * (self.p * self.beta - 1) / self.p
        if lhs > rhs * (1 + 1e-12):
            raise ParamError(
                f"smallness constraint violated: C^p/eps^(p*beta-1)={lhs:.4g} > 2k(p*beta-1)/p={rhs:.4g}")
        self._equality = math.isclose(lhs, rhs, rel_tol=1e-9)

    def f(self, t):
        t = np.asarray(t, dtype=float)
        k, p, beta = self.spec.k, self.p, self.beta
        integ = (self.eps ** (1 - p * beta) - (2 * k * t + self.eps) ** (1 - p * beta)) \
            / (2 * k * (p * beta - 1))
        base = 1.0 - p * self.C**p * integ
        if self._equality:
            # the equality case degenerates exactly at t = infinity; base > 0 for finite t
            base = np.maximum(base, 1e-300)
        return base ** (-1.0 / p)

    def bound(self, t):
        t = np.asarray(t, dtype=float)
        out = self.f(t) * self.C * (2 * self.spec.k * t + self.eps) ** (-self.beta)
        return float(out) if out.ndim == 0 else out

    def decay_exponent(self) -> float:
        """Large-time power: beta in the strict case, 1/p at equality."""
        return 1.0 / self.p if self._equality else self.beta

    def initial_profile(self) -> RadialProfile:
        return power_tail(mu=self.C, beta=self.beta, eps=self.eps)


@dataclass
class GaussianPlusEnvelope(Envelope):
    """Small data below C (4 pi a)^(-k/2) e^(-|x|^2/4a) with p k > 2: global."""

    spec: ProblemSpec
    C: float
    a: float
    p: float

    def __post_init__(self):
        if self.spec.sign != PLUS or self.spec.reaction_p != self.p:
            raise ParamError("GaussianPlusEnvelope needs a plus spec with reaction_p == p")
        if self.C <= 0 or self.a <= 0:
            raise ParamError("C and a must be positive")
        k = self.spec.k
        if self.p * k <= 2:
            raise ParamError("GaussianPlusEnvelope requires p k > 2")
        if self.smallness_margin() <= 0:
            raise ParamError(f"C={self.C} too large: smallness margin {self.smallness_margin():.4g} <= 0")

    def _coef(self):
        k, p = self.spec.k, self.p
        return p * self.C**p / ((4 * math.pi) ** (p * k / 2.0) * (p * k / 2.0 - 1.0))

    def smallness_margin(self) -> float:
        k, p = self.spec.k, self.p
        return 1.0 - self._coef() / self.a ** (p * k / 2.0 - 1.0)

    def f(self, t):
        t = np.asarray(t, dtype=float)
        k, p = self.spec.k, self.p
        e = p * k / 2.0 - 1.0
        return (1.0 + self._coef() * ((self.a + t) ** (-e) - self.a ** (-e))) ** (-1.0 / p)

    def f_sup(self) -> float:
        return self.smallness_margin() ** (-1.0 / self.p)

    def bound(self, t):
        t = np.asarray(t, dtype=float)
        k = self.spec.k
        out = self.f(t) * self.C * (4 * math.pi * (self.a + t)) ** (-k / 2.0)
        return float(out) if out.ndim == 0 else out

    def initial_profile(self) -> RadialProfile:
        return gauss_kernel(a=self.a, k=self.spec.k)

    @staticmethod
    def max_amplitude(k: int, p: float, a: float) -> float:
        """Largest C the smallness constraint allows for (k, p, a)."""
        if p * k <= 2:
            raise ParamError("requires p k > 2")
        return ((4 * math.pi) ** (p * k / 2.0) * (p * k / 2.0 - 1.0)
                * a ** (p * k / 2.0 - 1.0) / p) ** (1.0 / p)


def envelope_bound(envelope: Envelope, t):
    """The envelope's explicit sup-norm bound at time t."""
    return envelope.bound(t)


_ENV_ID_RE = re.compile(r"^([a-z_0-9]+)(?:\{(.*)\})?$")


def envelope_from_id(env_id: str, spec: ProblemSpec) -> Envelope:
    m = _ENV_ID_RE.match(env_id.strip())
    if not m:
        raise ParamError(f"unparseable envelope id {env_id!r}")
    name, body = m.group(1), m.group(2) or ""
    params = parse_params(body)
    if name == "light_tail_minus":
        return LightTailMinus(spec, C=float(params["C"]), p=float(params["p"]))
    if name == "heavy_tail_minus":
        return HeavyTailMinus(spec, C=float(params["C"]), eps=float(params["eps"]),
                              beta=float(params["beta"]), p=float(params["p"]))
    if name == "gaussian_plus":
        return GaussianPlusEnvelope(spec, C=float(params["C"]), a=float(params["a"]),
                                    p=float(params["p"]))
    raise ParamError(f"unknown envelope {name!r}")


@dataclass
class EnvelopeReport:
    """Trajectory-vs-bound comparison: worst sup/bound ratio and violations."""

    max_ratio: float
    n_violations: int
    times: np.ndarray
    sups: np.ndarray
    bounds: np.ndarray

    @property
    def dominated(self) -> bool:
        return self.n_violations == 0


def verify_envelope(envelope: Envelope, spec: ProblemSpec, u0: GridField,
                    cfg: SchemeConfig, T: float, tol: float = 0.1,
                    window_margin: float = 0.0) -> EnvelopeReport:
    """Solve from the envelope's extremal data; check sup <= bound (1 + tol)."""
    traj = solve(u0, spec, cfg, T, window_margin=window_margin)
    if traj.blownup:
        raise ParamError("envelope verification run blew up; parameters outside the regime")
    bounds = np.asarray(envelope.bound(traj.times))
    ratios = traj.sup_window / bounds
    max_ratio = float(np.max(ratios))
    n_viol = int(np.sum(ratios > 1.0 + tol))
    return EnvelopeReport(max_ratio, n_viol, traj.times, traj.sup_window, bounds)


# --- the Jensen ODE bound --------------------------------------------------------

def jensen_blowup_time(g0: float, C: float, p: float) -> float:
    """Blow-up time 1/(p C g0^p) of g' = C g^(1+p), g(0) = g0.

    The certified mechanism behind systematic blow-up: pairing the solution
    against the compactly supported kernel evolution obeys this differential
    inequality with C the p-th power of the data's L1 mass in R^k.
    """
    if g0 <= 0 or C <= 0 or p <= 0:
        raise ParamError("jensen_blowup_time needs positive g0, C, p")
    return 1.0 / (p * C * g0**p)


# --- trajectory classification ----------------------------------------------------

@dataclass
class BlowupVerdict:
    kind: str
    t_star: float | None = None
    rate: float | None = None
    detail: str = ""

    def csv_value(self) -> str:
        if self.kind == BLOW_UP:
            return repr(float(self.t_star))
        if self.kind == GLOBAL_DECAY:
            return repr(float(self.rate))
        return ""


def classify_trajectory(traj: Trajectory, T_max: float) -> BlowupVerdict:
    """BlowUp(t*) on threshold crossing; GlobalDecay(rate) when the sup-norm's
    last-decade log-log slope is below the decay threshold; Undecided else.

    The decay rate is the least-squares slope of log sup against log(1 + t)
    over the last decade, matching the (1 + t)^(-k/2) large-time heat decay.
    """
    if traj.blownup:
        return BlowupVerdict(BLOW_UP, t_star=traj.blowup_time)
    tt = traj.times
    ss = np.maximum(traj.sup_window, 1e-300)
    mask = tt >= T_max / 10.0
    if np.sum(mask) < 3:
        return BlowupVerdict(UNDECIDED, detail="too few samples in the last decade")
    slope_decade = float(np.polyfit(np.log(tt[mask]), np.log(ss[mask]), 1)[0])
    if slope_decade <= DECAY_SLOPE_THRESHOLD:
        rate = float(np.polyfit(np.log(1.0 + tt[mask]), np.log(ss[mask]), 1)[0])
        return BlowupVerdict(GLOBAL_DECAY, rate=rate,
                             detail=f"decade slope {slope_decade:.3f}")
    return BlowupVerdict(UNDECIDED, detail=f"decade slope {slope_decade:.3f} > {DECAY_SLOPE_THRESHOLD}")


# --- the exponent sweep -------------------------------------------------------------

@dataclass
class SweepEntry:
    sign: str
    k: int
    N: int
    p: float
    scale: float
    verdict: BlowupVerdict


@dataclass
class SweepTable:
    entries: list

    def bracket(self):
        """[p_lo, p_hi]: largest all-scale BlowUp p, smallest some-scale GlobalDecay p."""
        by_p = {}
        for e in self.entries:
            by_p.setdefault(e.p, []).append(e.verdict.kind)
        p_lo, p_hi = None, None
        for p in sorted(by_p):
            kinds = by_p[p]
            if all(k == BLOW_UP for k in kinds):
                p_lo = p if p_lo is None else max(p_lo, p)
            if any(k == GLOBAL_DECAY for k in kinds):
                p_hi = p if p_hi is None else min(p_hi, p)
        return p_lo, p_hi

    def save_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["sign", "k", "N", "p", "scale", "verdict", "t_star_or_rate"])
            for e in self.entries:
                writer.writerow([e.sign, e.k, e.N, repr(float(e.p)), repr(float(e.scale)),
                                 e.verdict.kind, e.verdict.csv_value()])


def exponent_sweep(spec_base: ProblemSpec, p_list, scales, data_profile: RadialProfile,
                   L: float, m: int, cfg: SchemeConfig, T_max: float,
                   threads: int = 1, mark_critical: bool = True) -> SweepTable:
    """Classify the reaction flow for each (p, scale); entries are independent
    jobs executed by a thread pool and assembled in sorted order.

    For the plus operator the critical exponent 2/k is marked Undecided by
    design (the paper leaves the critical case open); its entry never runs.
    """
    jobs = []
    critical = 2.0 / spec_base.k if spec_base.sign == PLUS else None
    for p in sorted(p_list):
        for scale in scales:
            jobs.append((float(p), float(scale)))

    def run(job):
        p, scale = job
        if mark_critical and critical is not None and math.isclose(p, critical, rel_tol=1e-12):
            return SweepEntry(spec_base.sign, spec_base.k, spec_base.N, p, scale,
                              BlowupVerdict(UNDECIDED, detail="critical exponent, by design"))
        spec = ProblemSpec(spec_base.N, spec_base.k, spec_base.sign, reaction_p=p)
        u0 = GridField.from_profile(data_profile, spec.N, L, m, scale=scale)
        traj = solve(u0, spec, cfg, T_max, window_margin=min(L / 3, math.sqrt(2 * spec.k * T_max)))
        return SweepEntry(spec.sign, spec.k, spec.N, p, scale, classify_trajectory(traj, T_max))

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, jobs))
    else:
        results = [run(j) for j in jobs]
    results.sort(key=lambda e: (e.p, e.scale))
    return SweepTable(results)


def blowup_data(eps: float = 1.0) -> RadialProfile:
    """The compact paraboloid cap used to probe systematic blow-up."""
    return compact_parabola(eps)
