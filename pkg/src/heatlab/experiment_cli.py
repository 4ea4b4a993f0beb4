"""Experiment front end: sectioned plain-text configs in, JSON reports and CSV
artifacts out.

One experiment per process invocation; a fixed config + seed reproduces every
artifact byte for byte.  Exit codes: 0 all checks pass, 1 check failure
(report still written), 2 malformed config.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import tempfile
import time
from dataclasses import dataclass, field

import numpy as np

from . import analytic_catalog as catalog
from . import fujita_lab, grid_solver, radial_engine, spectral
from .errors import ConfigError, HeatLabError, ParamError
from .profiles import profile_from_id
from .spectral import MINUS, PLUS, ProblemSpec, SymMatrix

SCHEMA_VERSION = "1"

KINDS = ("verify_catalog", "radial_reduce", "grid_convergence", "quenching",
         "comparison_fuzz", "envelope_check", "fujita_sweep")

# canonical catalog coverage for verify_catalog: (solution id, problem settings)
VERIFICATION_SET = (
    ("one_var_convex", dict(N=2, k=1, sign=MINUS)),
    ("one_var_concave", dict(N=2, k=1, sign=PLUS)),
    ("travelling_wave{alpha=0,beta=1,c=1}", dict(N=2, k=1, sign=MINUS)),
    ("travelling_wave{alpha=0,beta=1,c=1}", dict(N=2, k=1, sign=PLUS)),
    ("polynomial{seed=7}", dict(N=3, k=2, sign=MINUS)),
    ("polynomial{seed=7}", dict(N=3, k=2, sign=PLUS)),
    ("self_similar_minus{beta=1,mu=1,eps=0}", dict(N=2, k=1, sign=MINUS)),
    ("self_similar_minus{beta=0.7,mu=2,eps=0.5}", dict(N=3, k=2, sign=MINUS)),
    ("gaussian_plus{mu=1}", dict(N=2, k=1, sign=PLUS)),
    ("gaussian_plus{mu=1}", dict(N=3, k=2, sign=PLUS)),
    ("shifted_gaussian_plus{a=1}", dict(N=2, k=1, sign=PLUS)),
    ("radial_transport_minus{profile=exp_decay}", dict(N=2, k=1, sign=MINUS)),
    ("radial_transport_minus{profile=exp_quadratic}", dict(N=3, k=2, sign=MINUS)),
    ("separated_exponential_minus{mu=1}", dict(N=2, k=1, sign=MINUS)),
    ("quenching_minus", dict(N=2, k=1, sign=MINUS)),
    ("stationary_minus{p=1,mu=1}", dict(N=2, k=1, sign=MINUS, reaction_p=1.0)),
)


# --- config parsing ------------------------------------------------------------

class Section:
    """One config section with typed, consumed-key access."""

    def __init__(self, name: str, items: dict):
        self.name = name
        self._items = dict(items)

    def _raw(self, key, default):
        if key in self._items:
            return self._items.pop(key)
        if default is _REQUIRED:
            raise ConfigError(f"[{self.name}] is missing required key {key!r}")
        return default

    def take_str(self, key, default=None):
        v = self._raw(key, default)
        return v if v is None else str(v)

    def take_float(self, key, default=None):
        v = self._raw(key, default)
        if v is None or isinstance(v, float):
            return v
        try:
            return float(v)
        except ValueError:
            raise ConfigError(f"[{self.name}] {key} = {v!r} is not a number") from None

    def take_int(self, key, default=None):
        v = self._raw(key, default)
        if v is None or isinstance(v, int):
            return v
        try:
            return int(v)
        except ValueError:
            raise ConfigError(f"[{self.name}] {key} = {v!r} is not an integer") from None

    def take_bool(self, key, default=None):
        v = self._raw(key, default)
        if v is None or isinstance(v, bool):
            return v
        if v.lower() in ("true", "yes", "1"):
            return True
        if v.lower() in ("false", "no", "0"):
            return False
        raise ConfigError(f"[{self.name}] {key} = {v!r} is not a boolean")

    def take_floats(self, key, default=None):
        v = self._raw(key, default)
        if v is None or isinstance(v, list):
            return v
        try:
            return [float(x) for x in str(v).split(",") if x.strip()]
        except ValueError:
            raise ConfigError(f"[{self.name}] {key} = {v!r} is not a comma list of numbers") from None

    def take_strs(self, key, default=None):
        v = self._raw(key, default)
        if v is None or isinstance(v, list):
            return v
        return [x.strip() for x in str(v).split(",") if x.strip()]

    def finish(self):
        if self._items:
            raise ConfigError(f"unknown keys in [{self.name}]: {sorted(self._items)}")


_REQUIRED = object()


class ParsedConfig:
    def __init__(self, sections: dict):
        self._sections = sections
        self._used = set()

    def section(self, name, required=True) -> Section:
        self._used.add(name)
        if name not in self._sections:
            if required:
                raise ConfigError(f"missing required section [{name}]")
            return Section(name, {})
        return Section(name, self._sections[name])

    def has_section(self, name) -> bool:
        return name in self._sections

    def finish(self):
        unknown = set(self._sections) - self._used
        if unknown:
            raise ConfigError(f"unknown sections: {sorted(unknown)}")

    def echo(self) -> dict:
        return {name: dict(items) for name, items in self._sections.items()}


def parse_config_text(text: str) -> ParsedConfig:
    sections: dict[str, dict] = {}
    current = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError(f"line {lineno}: malformed section header {raw!r}")
            name = line[1:-1].strip()
            if name in sections:
                raise ConfigError(f"line {lineno}: duplicate section [{name}]")
            sections[name] = {}
            current = name
            continue
        if current is None:
            raise ConfigError(f"line {lineno}: key outside any section: {raw!r}")
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value, got {raw!r}")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        if key in sections[current]:
            raise ConfigError(f"line {lineno}: duplicate key {key!r} in [{current}]")
        sections[current][key] = value
    return ParsedConfig(sections)


def _problem_spec(sec: Section) -> ProblemSpec:
    n = sec.take_int("N", _REQUIRED)
    k = sec.take_int("k", _REQUIRED)
    sign = sec.take_str("sign", _REQUIRED)
    reaction_p = sec.take_float("reaction_p", None)
    try:
        return ProblemSpec(N=n, k=k, sign=sign, reaction_p=reaction_p)
    except ParamError as e:
        raise ConfigError(f"[problem] {e}") from None


# --- report plumbing --------------------------------------------------------------

@dataclass
class Check:
    name: str
    passed: bool
    measured: object
    tolerance: object
    detail: dict = field(default_factory=dict)

    def as_json(self):
        return {"name": self.name, "passed": bool(self.passed), "measured": self.measured,
                "tolerance": self.tolerance, "detail": self.detail}


@dataclass
class RunContext:
    out_dir: str
    stem: str
    seed: int
    threads: int
    artifacts: list = field(default_factory=list)

    def artifact_path(self, suffix: str) -> str:
        path = os.path.join(self.out_dir, f"{self.stem}_{suffix}")
        self.artifacts.append(os.path.basename(path))
        return path


def _atomic_write(path: str, text: str) -> None:
    d = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp_heatlab_")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# --- experiment handlers ------------------------------------------------------------

def _handle_verify_catalog(cfg: ParsedConfig, ctx: RunContext) -> list[Check]:
    sec = cfg.section("catalog")
    checks_mode = sec.take_str("checks", "residuals")
    checks: list[Check] = []
    if checks_mode == "residuals":
        points = sec.take_int("points", 100)
        h = sec.take_float("h", 2e-3)
        min_slope = sec.take_float("min_slope", 1.8)
        variants = sec.take_strs("variants", None)
        sec.finish()
        rng = np.random.default_rng(ctx.seed)
        rows = []
        jobs = VERIFICATION_SET if variants is None else [
            (sid, pkw) for sid, pkw in VERIFICATION_SET
            if any(v in sid for v in variants)]
        if not jobs:
            raise ConfigError("[catalog] variants filter matched nothing")
        for sid, pkw in jobs:
            spec = ProblemSpec(**pkw)
            sol = catalog.solution_from_id(sid, spec)
            r1, r2, slope = catalog.residual_convergence(sol, rng, count=points, h=h)
            ok = slope >= min_slope
            rows.append((sol.name, spec.sign, spec.N, spec.k, r1, r2, slope))
            checks.append(Check(f"residual_slope:{sid}:{spec.sign}:N{spec.N}k{spec.k}", ok,
                                slope if math.isfinite(slope) else "exact", min_slope,
                                {"res_h": r1, "res_h_half": r2}))
        path = ctx.artifact_path("residuals.csv")
        lines = ["variant,sign,N,k,res_h,res_h_half,slope"]
        for name, sign, n, k, r1, r2, slope in rows:
            lines.append(f"{name},{sign},{n},{k},{r1!r},{r2!r},{slope!r}")
        _atomic_write(path, "\n".join(lines) + "\n")
        return checks
    if checks_mode == "mass_growth":
        n = sec.take_int("N", 2)
        k = sec.take_int("k", 1)
        t_list = sec.take_floats("t_list", [1.0, 4.0])
        tol = sec.take_float("tol", 1e-4)
        sec.finish()
        spec = ProblemSpec(N=n, k=k, sign=PLUS)
        mu = (4 * math.pi) ** (-n / 2.0)
        sol = catalog.GaussianPlus(spec, mu=mu)
        for t in t_list:
            def radial(r, t=t):
                pts = np.zeros(r.shape + (n,))
                pts[..., 0] = r
                return sol.value(t, pts)

            mass = radial_engine.radial_mass(radial, n, r_max=14.0 * math.sqrt(t), nodes=2048)
            expected = t ** ((n - k) / 2.0)
            rel = abs(mass - expected) / expected
            checks.append(Check(f"kernel_mass:t={t:g}", rel <= tol, mass, expected,
                                {"rel_err": rel, "tol": tol}))
        return checks
    if checks_mode == "structural":
        count = sec.take_int("count", 10000)
        n_max = sec.take_int("n_max", 6)
        c_shift = sec.take_float("c", 0.7)
        tol = sec.take_float("tol", 1e-10)
        jacobi_sample = sec.take_int("jacobi_sample", 300)
        sec.finish()
        rng = np.random.default_rng(ctx.seed)
        worst_shift = 0.0
        worst_mono = 0.0
        worst_order = 0.0
        remaining = count
        while remaining > 0:
            batch = min(remaining, 2000)
            remaining -= batch
            n = int(rng.integers(2, n_max + 1))
            k = int(rng.integers(1, n + 1))
            sign = MINUS if rng.integers(2) == 0 else PLUS
            spec = ProblemSpec(N=n, k=k, sign=sign)
            a = rng.normal(size=(batch, n, n))
            a = 0.5 * (a + np.swapaxes(a, -1, -2))
            base = spectral.truncated_laplacian_batch(a, spec)
            shifted = spectral.truncated_laplacian_batch(
                a + c_shift * np.eye(n), spec)
            worst_shift = max(worst_shift, float(np.max(np.abs(shifted - base - k * c_shift))))
            b = rng.normal(size=(batch, n, n))
            psd = b @ np.swapaxes(b, -1, -2)  # PSD by construction
            pert = spectral.truncated_laplacian_batch(a + psd, spec)
            worst_mono = max(worst_mono, float(np.max(base - pert)))
            tr = np.trace(a, axis1=-2, axis2=-1)
            lo = spectral.truncated_laplacian_batch(a, ProblemSpec(N=n, k=k, sign=MINUS))
            hi = spectral.truncated_laplacian_batch(a, ProblemSpec(N=n, k=k, sign=PLUS))
            worst_order = max(worst_order, float(np.max(lo - (k / n) * tr)),
                              float(np.max((k / n) * tr - hi)))
        checks.append(Check("shift_identity", worst_shift <= tol, worst_shift, tol, {}))
        checks.append(Check("psd_monotonicity", worst_mono <= tol, worst_mono, tol, {}))
        checks.append(Check("trace_ordering", worst_order <= tol, worst_order, tol, {}))
        # cross-check the batch path against the cyclic-Jacobi evaluator
        worst_x = 0.0
        for _ in range(jacobi_sample):
            n = int(rng.integers(2, n_max + 1))
            k = int(rng.integers(1, n + 1))
            sign = MINUS if rng.integers(2) == 0 else PLUS
            spec = ProblemSpec(N=n, k=k, sign=sign)
            a = rng.normal(size=(n, n))
            sym = SymMatrix(a)
            scalar = spectral.truncated_laplacian(sym, spec)
            batch = float(spectral.truncated_laplacian_batch(sym.a[None], spec)[0])
            worst_x = max(worst_x, abs(scalar - batch))
        checks.append(Check("jacobi_batch_agreement", worst_x <= tol, worst_x, tol,
                            {"sample": jacobi_sample}))
        return checks
    raise ConfigError(f"[catalog] unknown checks mode {checks_mode!r}")


def _scheme_config(sec: Section, oracle=None) -> grid_solver.SchemeConfig:
    boundary = sec.take_str("boundary", "oracle" if oracle is not None else "extrapolate")
    dt = sec.take_float("dt", None)
    cfl = sec.take_float("cfl", 0.2)
    stride = sec.take_int("snapshot_stride", 100)
    threshold = sec.take_float("blowup_threshold", 1e6)
    try:
        return grid_solver.SchemeConfig(dt=dt, cfl=cfl, boundary=boundary, oracle=oracle,
                                        blowup_threshold=threshold, snapshot_stride=stride)
    except ConfigError:
        raise
    except HeatLabError as e:
        raise ConfigError(str(e)) from None


def _handle_grid_convergence(cfg: ParsedConfig, ctx: RunContext) -> list[Check]:
    spec = _problem_spec(cfg.section("problem"))
    data_sec = cfg.section("data")
    sid = data_sec.take_str("catalog", _REQUIRED)
    data_sec.finish()
    sol = catalog.solution_from_id(sid, spec)
    grid_sec = cfg.section("grid")
    L = grid_sec.take_float("L", _REQUIRED)
    m = grid_sec.take_int("m", _REQUIRED)
    T = grid_sec.take_float("T", 1.0)
    scheme = _scheme_config(grid_sec, oracle=sol)
    grid_sec.finish()
    conv = cfg.section("convergence", required=False)
    refinements = conv.take_int("refinements", 1)
    tol_sup = conv.take_float("tol_sup", 1e-2)
    min_improvement = conv.take_float("min_improvement", 3.5)
    conv.finish()

    checks = []
    errors = []
    mm, sc = m, scheme
    for level in range(refinements + 1):
        u0 = grid_solver.GridField.from_solution(sol, L=L, m=mm, t=0.0)
        traj = grid_solver.solve(u0, spec, sc, T)
        exact = grid_solver.GridField.from_solution(sol, L=L, m=mm, t=traj.final.t)
        err = float(np.max(np.abs(traj.final.values - exact.values)))
        errors.append((u0.h, err))
        checks.append(Check(f"sup_error:level{level}", err <= tol_sup or level > 0, err,
                            tol_sup, {"h": u0.h, "m": mm, "dt": sc.resolve_dt(u0.h, spec.k)}))
        if level < refinements:
            dt_now = sc.resolve_dt(u0.h, spec.k)
            mm = 2 * mm - 1
            sc = grid_solver.SchemeConfig(dt=dt_now / 4.0, cfl=sc.cfl, boundary=sc.boundary,
                                          oracle=sc.oracle, blowup_threshold=sc.blowup_threshold,
                                          snapshot_stride=sc.snapshot_stride)
    for lvl in range(len(errors) - 1):
        improvement = errors[lvl][1] / errors[lvl + 1][1]
        checks.append(Check(f"improvement:level{lvl}->{lvl + 1}", improvement >= min_improvement,
                            improvement, min_improvement,
                            {"order": math.log2(improvement)}))
    lines = ["h,sup_error"]
    for h, err in errors:
        lines.append(f"{h!r},{err!r}")
    _atomic_write(ctx.artifact_path("convergence.csv"), "\n".join(lines) + "\n")
    return checks


def _handle_radial_reduce(cfg: ParsedConfig, ctx: RunContext) -> list[Check]:
    exp_sec = cfg.section("experiment")
    exp_sec.take_str("kind")
    exp_sec.take_int("seed", 0)
    mode = exp_sec.take_str("mode", "lift")
    exp_sec.finish()
    if mode == "lift":
        return _radial_lift(cfg, ctx)
    if mode == "convexity":
        return _radial_convexity(cfg, ctx)
    raise ConfigError(f"[experiment] unknown radial_reduce mode {mode!r}")


def _radial_lift(cfg: ParsedConfig, ctx: RunContext) -> list[Check]:
    spec = _problem_spec(cfg.section("problem"))
    data_sec = cfg.section("data")
    sid = data_sec.take_str("catalog", _REQUIRED)
    pid = data_sec.take_str("profile", _REQUIRED)
    data_sec.finish()
    sol = catalog.solution_from_id(sid, spec)
    g = profile_from_id(pid, default_k=spec.k)
    grid_sec = cfg.section("grid")
    L = grid_sec.take_float("L", _REQUIRED)
    m = grid_sec.take_int("m", _REQUIRED)
    scheme = _scheme_config(grid_sec, oracle=sol)
    grid_sec.finish()
    lift_sec = cfg.section("lift")
    t_compare = lift_sec.take_float("T_compare", 1.0)
    tol_sup = lift_sec.take_float("tol_sup", 1e-2)
    t_decay = lift_sec.take_float("T_decay", 4.0)
    target = lift_sec.take_float("decay_exponent", -0.5)
    decay_tol = lift_sec.take_float("decay_tol", 0.05)
    shift_a = lift_sec.take_float("shift_a", 1.0)
    lift_sec.finish()

    checks = []
    u0 = grid_solver.GridField.from_solution(sol, L=L, m=m, t=0.0)
    traj = grid_solver.solve(u0, spec, scheme, t_compare)
    radii = np.sqrt(np.sum(traj.final.points() ** 2, axis=-1))
    lift = radial_engine.heat_convolve_k(g, spec.k, traj.final.t, radii.ravel()).reshape(radii.shape)
    err = float(np.max(np.abs(traj.final.values - lift)))
    checks.append(Check("lift_sup_error", err <= tol_sup, err, tol_sup,
                        {"T": t_compare, "m": m, "L": L}))
    traj2 = grid_solver.solve(traj.final, spec, scheme, t_decay)
    tt = np.concatenate([traj.times, traj2.times[1:]])
    ss = np.concatenate([traj.sup_global, traj2.sup_global[1:]])
    fit = float(np.polyfit(np.log(shift_a + tt), np.log(np.maximum(ss, 1e-300)), 1)[0])
    checks.append(Check("sup_decay_exponent", abs(fit - target) <= decay_tol, fit, target,
                        {"tol": decay_tol, "time_variable": f"{shift_a:g}+t"}))
    series = [radial_engine.RadialField(float(t), np.linspace(0, L, 200),
                                        radial_engine.heat_convolve_k(g, spec.k, float(t),
                                                                      np.linspace(0, L, 200)))
              for t in (t_compare, t_decay)]
    radial_engine.save_series_csv(series, ctx.artifact_path("lift_series.csv"))
    return checks


def _radial_convexity(cfg: ParsedConfig, ctx: RunContext) -> list[Check]:
    sec = cfg.section("convexity")
    k = sec.take_int("k", 1)
    t_values = sec.take_floats("t_values", _REQUIRED)
    r_max = sec.take_float("r_max", 2.5)
    r_step = sec.take_float("r_step", 0.0125)
    flag_pid = sec.take_str("flag_profile", _REQUIRED)
    flag_t = sec.take_float("flag_t", _REQUIRED)
    flag_r = sec.take_float("flag_r", _REQUIRED)
    clean_pid = sec.take_str("clean_profile", _REQUIRED)
    sec.finish()
    r_grid = np.arange(0.0, r_max + 1e-12, r_step)
    checks = []
    flag_series = radial_engine.convolution_series(profile_from_id(flag_pid, default_k=k),
                                                   k, t_values, r_grid)
    rep = radial_engine.check_convexity_condition(flag_series)
    hit = rep.violation_near(flag_t, flag_r, t_tol=1e-9, r_tol=r_step / 2)
    checks.append(Check("counterexample_flagged", hit, len(rep.violations),
                        f"violation at (t,r)=({flag_t:g},{flag_r:g})",
                        {"worst_defect": rep.worst_defect}))
    clean_series = radial_engine.convolution_series(profile_from_id(clean_pid, default_k=k),
                                                    k, t_values, r_grid)
    rep2 = radial_engine.check_convexity_condition(clean_series)
    checks.append(Check("clean_certified", rep2.certified, len(rep2.violations), 0,
                        {"worst_defect": rep2.worst_defect}))
    radial_engine.save_series_csv(flag_series, ctx.artifact_path("flag_series.csv"))
    radial_engine.save_series_csv(clean_series, ctx.artifact_path("clean_series.csv"))
    return checks


def _handle_quenching(cfg: ParsedConfig, ctx: RunContext) -> list[Check]:
    spec = _problem_spec(cfg.section("problem"))
    sec = cfg.section("quenching")
    L = sec.take_float("L", 2.0)
    m = sec.take_int("m", 129)
    t_probe = sec.take_float("t_probe", 0.6)
    grid_tol = sec.take_float("grid_tol", 5e-3)
    r_max = sec.take_float("r_max", 3.0)
    r_points = sec.take_int("r_points", 301)
    scheme_sec = Section("quenching", {})  # defaults
    sol = catalog.QuenchingProfileMinus(spec)
    scheme = _scheme_config(scheme_sec, oracle=sol)
    sec.finish()

    checks = []
    g = sol.g
    t_star = radial_engine.quench_time(g, spec)
    expected = g.support_radius**2 / (2.0 * spec.k)
    checks.append(Check("quench_time", t_star == expected, t_star, expected, {}))
    r = np.linspace(0, r_max, r_points)
    sup_after = max(float(np.max(np.abs(radial_engine.transport_solve(g, spec, t, r))))
                    for t in (t_star, t_probe, 2 * t_star))
    checks.append(Check("transport_extinct", sup_after == 0.0, sup_after, 0.0,
                        {"times": [t_star, t_probe, 2 * t_star]}))
    before = float(np.max(np.abs(radial_engine.transport_solve(g, spec, 0.9 * t_star, r))))
    checks.append(Check("transport_alive_before", before > 0.0, before, "> 0", {}))
    u0 = grid_solver.GridField.from_solution(sol, L=L, m=m, t=0.0)
    traj = grid_solver.solve(u0, spec, scheme, t_probe)
    sup = traj.final.sup_norm()
    checks.append(Check("grid_sup_at_probe", sup <= grid_tol, sup, grid_tol,
                        {"t": traj.final.t, "m": m, "L": L}))
    grid_solver.save_grid_block(traj.final, ctx.artifact_path("final.block"))
    series = [radial_engine.RadialField(t, r, np.asarray(radial_engine.transport_solve(g, spec, t, r)))
              for t in (0.0, 0.25 * t_star, 0.5 * t_star, t_star, t_probe)]
    radial_engine.save_series_csv(series, ctx.artifact_path("transport.csv"))
    return checks


def _handle_comparison_fuzz(cfg: ParsedConfig, ctx: RunContext) -> list[Check]:
    sec = cfg.section("fuzz")
    n = sec.take_int("N", 2)
    k = sec.take_int("k", 1)
    signs = sec.take_strs("signs", [MINUS, PLUS])
    L = sec.take_float("L", 4.0)
    m = sec.take_int("m", 33)
    T = sec.take_float("T", 0.5)
    trials = sec.take_int("trials", 50)
    tol_factor = sec.take_float("tol_factor", 10.0)
    sec.finish()
    checks = []
    rows = []
    for sign in signs:
        spec = ProblemSpec(N=n, k=k, sign=sign)
        rng = np.random.default_rng(ctx.seed)
        gen = grid_solver.ordered_pair_generator(rng, n, L, m)
        cfg_s = grid_solver.SchemeConfig(boundary=grid_solver.BOUNDARY_EXTRAPOLATE)
        rep = grid_solver.comparison_fuzz(gen, spec, cfg_s, T, trials)
        allowed = tol_factor * rep.scheme_tolerance
        checks.append(Check(f"comparison:{sign}", rep.worst_margin >= -allowed,
                            rep.worst_margin, -allowed,
                            {"trials": trials, "scheme_tolerance": rep.scheme_tolerance}))
        rows.extend((sign, i, mg) for i, mg in enumerate(rep.margins))
    lines = ["sign,trial,min_margin"]
    for sign, i, mg in rows:
        lines.append(f"{sign},{i},{mg!r}")
    _atomic_write(ctx.artifact_path("margins.csv"), "\n".join(lines) + "\n")
    return checks


def _handle_envelope_check(cfg: ParsedConfig, ctx: RunContext) -> list[Check]:
    spec_base = _problem_spec(cfg.section("problem"))
    sec = cfg.section("envelope")
    env_kind = sec.take_str("kind", "light_tail_minus")
    C = sec.take_float("C", 0.5)
    p_list = sec.take_floats("p_list", [0.25, 0.5, 1.0])
    L = sec.take_float("L", 6.0)
    m = sec.take_int("m", 97)
    T = sec.take_float("T", 3.0)
    tol = sec.take_float("tol", 0.1)
    margin = sec.take_float("window_margin", 2.5)
    rate_check_p = sec.take_float("rate_check_p", None)
    rate_tol = sec.take_float("rate_tol", 0.1)
    env_a = sec.take_float("a", 1.0)
    sec.finish()
    checks = []
    series_rows = []
    for p in p_list:
        spec = ProblemSpec(spec_base.N, spec_base.k, spec_base.sign, reaction_p=p)
        if env_kind == "light_tail_minus":
            env = fujita_lab.LightTailMinus(spec, C=C, p=p)
        elif env_kind == "gaussian_plus":
            env = fujita_lab.GaussianPlusEnvelope(spec, C=C, a=env_a, p=p)
        else:
            raise ConfigError(f"[envelope] unsupported envelope kind {env_kind!r}")
        u0 = grid_solver.GridField.from_profile(env.initial_profile(), spec.N, L, m)
        cfg_s = grid_solver.SchemeConfig(boundary=grid_solver.BOUNDARY_EXTRAPOLATE)
        rep = fujita_lab.verify_envelope(env, spec, u0, cfg_s, T, tol=tol, window_margin=margin)
        checks.append(Check(f"envelope_dominates:p={p:g}", rep.dominated, rep.max_ratio,
                            1.0 + tol, {"n_violations": rep.n_violations}))
        mask = rep.times >= T / 10.0
        slope = float(np.polyfit(np.log(np.maximum(rep.times[mask], 1e-300)),
                                 np.log(np.maximum(rep.sups[mask], 1e-300)), 1)[0])
        checks.append(Check(f"decays:p={p:g}", slope <= fujita_lab.DECAY_SLOPE_THRESHOLD,
                            slope, fujita_lab.DECAY_SLOPE_THRESHOLD, {}))
        if rate_check_p is not None and math.isclose(p, rate_check_p):
            i1 = int(np.searchsorted(rep.times, 2.0 * T / 3.0))
            rate = -(math.log(rep.sups[-1]) - math.log(rep.sups[i1])) \
                / (rep.times[-1] - rep.times[i1])
            checks.append(Check(f"exp_rate:p={p:g}", abs(rate - 1.0) <= rate_tol, rate, 1.0,
                                {"window": [float(rep.times[i1]), float(rep.times[-1])]}))
        series_rows.extend(
            (p, float(t), float(s), float(b)) for t, s, b in
            zip(rep.times[::20], rep.sups[::20], rep.bounds[::20]))
    if cfg.has_section("stationary"):
        st = cfg.section("stationary")
        p = st.take_float("p", 1.0)
        mu = st.take_float("mu", 1.0)
        Ls = st.take_float("L", 6.0)
        ms = st.take_int("m", 121)
        Ts = st.take_float("T", 1.0)
        factor = st.take_float("tol_factor", 10.0)
        st.finish()
        spec = ProblemSpec(spec_base.N, spec_base.k, MINUS, reaction_p=p)
        stat = catalog.StationaryMinus(spec, p=p, mu=mu)
        u0 = grid_solver.GridField.from_solution(stat, L=Ls, m=ms, t=0.0)
        cfg_s = grid_solver.SchemeConfig(boundary=grid_solver.BOUNDARY_ORACLE, oracle=stat)
        traj = grid_solver.solve(u0, spec, cfg_s, Ts)
        drift = float(np.max(np.abs(traj.final.values - u0.values)))
        tol_drift = factor * u0.h**2
        checks.append(Check("stationary_drift", drift <= tol_drift, drift, tol_drift,
                            {"h": u0.h, "T": Ts}))
    lines = ["p,t,sup,bound"]
    for p, t, s, b in series_rows:
        lines.append(f"{p!r},{t!r},{s!r},{b!r}")
    _atomic_write(ctx.artifact_path("envelopes.csv"), "\n".join(lines) + "\n")
    return checks


def _handle_fujita_sweep(cfg: ParsedConfig, ctx: RunContext) -> list[Check]:
    spec_base = _problem_spec(cfg.section("problem"))
    sec = cfg.section("sweep")
    blowup_p = sec.take_floats("blowup_p", [0.5, 1.0, 1.5])
    blowup_scales = sec.take_floats("blowup_scales", [1.0, 2.0])
    blowup_pid = sec.take_str("blowup_data", "compact_parabola{eps=1}")
    blowup_L = sec.take_float("blowup_L", 6.0)
    blowup_m = sec.take_int("blowup_m", 97)
    decay_p = sec.take_floats("decay_p", [3.0, 4.0])
    decay_pid = sec.take_str("decay_data", "gauss_kernel{a=1}")
    decay_scale_mode = sec.take_str("decay_scale", "half_smallness")
    decay_L = sec.take_float("decay_L", 10.0)
    decay_m = sec.take_int("decay_m", 101)
    decay_T = sec.take_float("decay_T", 5.0)
    t_max = sec.take_float("T_max", 30.0)
    rate_target = sec.take_float("rate_target", -0.5)
    rate_tol = sec.take_float("rate_tol", 0.1)
    include_critical = sec.take_bool("include_critical", True)
    shift_a = sec.take_float("shift_a", 1.0)
    sec.finish()

    checks = []
    scheme = grid_solver.SchemeConfig(boundary=grid_solver.BOUNDARY_EXTRAPOLATE)
    blow_tab = fujita_lab.exponent_sweep(
        spec_base, blowup_p, blowup_scales, profile_from_id(blowup_pid, default_k=spec_base.k),
        L=blowup_L, m=blowup_m, cfg=scheme, T_max=t_max, threads=ctx.threads,
        mark_critical=False)
    for e in blow_tab.entries:
        checks.append(Check(f"blowup:p={e.p:g}:scale={e.scale:g}",
                            e.verdict.kind == fujita_lab.BLOW_UP,
                            e.verdict.kind, fujita_lab.BLOW_UP,
                            {"t_star_or_rate": e.verdict.csv_value()}))
    entries = list(blow_tab.entries)
    critical = 2.0 / spec_base.k
    if include_critical:
        for scale in blowup_scales:
            entries.append(fujita_lab.SweepEntry(
                spec_base.sign, spec_base.k, spec_base.N, critical, float(scale),
                fujita_lab.BlowupVerdict(fujita_lab.UNDECIDED, detail="critical exponent, by design")))
        checks.append(Check("critical_undecided", True, fujita_lab.UNDECIDED,
                            fujita_lab.UNDECIDED, {"p": critical}))
    gk = profile_from_id(decay_pid, default_k=spec_base.k)
    for p in decay_p:
        spec = ProblemSpec(spec_base.N, spec_base.k, spec_base.sign, reaction_p=p)
        if decay_scale_mode == "half_smallness":
            scale = 0.5 * fujita_lab.GaussianPlusEnvelope.max_amplitude(spec.k, p, 1.0)
        else:
            scale = float(decay_scale_mode)
        u0 = grid_solver.GridField.from_profile(gk, spec.N, decay_L, decay_m, scale=scale)
        traj = grid_solver.solve(u0, spec, scheme, decay_T,
                                 window_margin=math.sqrt(2 * spec.k * decay_T))
        verdict = fujita_lab.classify_trajectory(traj, decay_T)
        ok = verdict.kind == fujita_lab.GLOBAL_DECAY
        checks.append(Check(f"decay:p={p:g}", ok, verdict.kind, fujita_lab.GLOBAL_DECAY,
                            {"scale": scale}))
        if ok:
            tt, ss = traj.times, np.maximum(traj.sup_window, 1e-300)
            mask = tt >= 1.0
            rate = float(np.polyfit(np.log(shift_a + tt[mask]), np.log(ss[mask]), 1)[0])
            checks.append(Check(f"decay_rate:p={p:g}", abs(rate - rate_target) <= rate_tol,
                                rate, rate_target, {"tol": rate_tol}))
            verdict = fujita_lab.BlowupVerdict(fujita_lab.GLOBAL_DECAY, rate=rate)
        entries.append(fujita_lab.SweepEntry(spec.sign, spec.k, spec.N, float(p),
                                             float(scale), verdict))
    entries.sort(key=lambda e: (e.p, e.scale))
    table = fujita_lab.SweepTable(entries)
    p_lo, p_hi = table.bracket()
    bracket_ok = (p_lo is not None and p_hi is not None and p_lo <= critical <= p_hi)
    checks.append(Check("bracket_contains_critical", bracket_ok,
                        [p_lo, p_hi], critical, {}))
    table.save_csv(ctx.artifact_path("verdicts.csv"))
    return checks


_HANDLERS = {
    "verify_catalog": _handle_verify_catalog,
    "radial_reduce": _handle_radial_reduce,
    "grid_convergence": _handle_grid_convergence,
    "quenching": _handle_quenching,
    "comparison_fuzz": _handle_comparison_fuzz,
    "envelope_check": _handle_envelope_check,
    "fujita_sweep": _handle_fujita_sweep,
}


def run_config(config_path: str, out_dir: str | None = None, threads: int | None = None,
               seed: int | None = None) -> dict:
    """Execute one experiment config; returns the report dict (also written to disk)."""
    with open(config_path) as fh:
        cfg = parse_config_text(fh.read())
    exp = cfg.section("experiment")
    kind = exp.take_str("kind", _REQUIRED)
    cfg_seed = exp.take_int("seed", 0)
    if kind not in KINDS:
        raise ConfigError(f"unknown experiment kind {kind!r} (known: {list(KINDS)})")
    if kind != "radial_reduce":
        exp.finish()
    out_sec = cfg.section("output", required=False)
    cfg_out = out_sec.take_str("dir", None)
    out_sec.finish()
    out_dir = out_dir or cfg_out or "."
    os.makedirs(out_dir, exist_ok=True)
    stem = os.path.splitext(os.path.basename(config_path))[0]
    ctx = RunContext(out_dir=out_dir, stem=stem,
                     seed=seed if seed is not None else cfg_seed,
                     threads=threads or os.cpu_count() or 1)
    start = time.perf_counter()
    checks = _HANDLERS[kind](cfg, ctx)
    cfg.finish()
    report = {
        "schema_version": SCHEMA_VERSION,
        "kind": kind,
        "seed": ctx.seed,
        "config": cfg.echo(),
        "checks": [c.as_json() for c in checks],
        "passed": all(c.passed for c in checks),
        "artifacts": ctx.artifacts,
        "wall_clock_s": round(time.perf_counter() - start, 3),
    }
    report_path = os.path.join(out_dir, f"{stem}_report.json")
    _atomic_write(report_path, json.dumps(report, indent=2) + "\n")
    return report


# --- report table merging -------------------------------------------------------

def merge_reports(paths: list[str]) -> str:
    """Merge reports into one CSV (returned as text); convergence groups gain a
    measured-order column (log2 of successive error ratios across h)."""
    from .errors import SchemaMismatch

    reports = []
    for p in paths:
        with open(p) as fh:
            reports.append((os.path.basename(p), json.load(fh)))
    versions = {r.get("schema_version") for _, r in reports}
    if len(versions) > 1:
        raise SchemaMismatch(f"mixed schema versions: {sorted(versions)}")
    lines = ["report,kind,check,passed,measured,tolerance,order"]
    conv_rows = []
    for name, rep in reports:
        for c in rep["checks"]:
            h = c.get("detail", {}).get("h")
            if rep["kind"] == "grid_convergence" and c["name"].startswith("sup_error") and h:
                conv_rows.append((name, c, float(h), float(c["measured"])))
    orders = {}
    conv_rows.sort(key=lambda r: -r[2])
    for i in range(len(conv_rows) - 1):
        h0, e0 = conv_rows[i][2], conv_rows[i][3]
        h1, e1 = conv_rows[i + 1][2], conv_rows[i + 1][3]
        if h1 < h0 and e1 > 0:
            orders[id(conv_rows[i + 1][1])] = math.log(e0 / e1) / math.log(h0 / h1)
    for name, rep in reports:
        for c in rep["checks"]:
            order = orders.get(id(c), "")
            lines.append(",".join([
                name, rep["kind"], c["name"], str(c["passed"]).lower(),
                json.dumps(c["measured"]) if not isinstance(c["measured"], str) else c["measured"],
                json.dumps(c["tolerance"]) if not isinstance(c["tolerance"], str) else str(c["tolerance"]),
                repr(order) if order != "" else "",
            ]))
    return "\n".join(lines) + "\n"


# --- CLI -----------------------------------------------------------------------------

def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="heatlab",
                                     description="truncated-Laplacian heat flow laboratory")
    sub = parser.add_subparsers(dest="command", required=True)
    run_p = sub.add_parser("run", help="run one experiment config")
    run_p.add_argument("config")
    run_p.add_argument("--out", default=None, help="output directory for report and artifacts")
    run_p.add_argument("--threads", type=int, default=None,
                       help="worker threads for sweep entries (default: available cores)")
    run_p.add_argument("--seed", type=int, default=None, help="override the config seed")
    tab_p = sub.add_parser("table", help="merge reports into a comparison table (CSV to stdout)")
    tab_p.add_argument("reports", nargs="+")
    args = parser.parse_args(argv)

    if args.command == "run":
        try:
            report = run_config(args.config, out_dir=args.out, threads=args.threads,
                                seed=args.seed)
        except (ConfigError, ParamError, FileNotFoundError) as e:
            print(f"config error: {e}", file=sys.stderr)
            return 2
        for c in report["checks"]:
            print(f"[{'PASS' if c['passed'] else 'FAIL'}] {c['name']}: "
                  f"measured={c['measured']} tolerance={c['tolerance']}")
        print(f"report: {report['kind']} passed={report['passed']} "
              f"wall_clock={report['wall_clock_s']}s")
        return 0 if report["passed"] else 1

    try:
        sys.stdout.write(merge_reports(args.reports))
    except HeatLabError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
