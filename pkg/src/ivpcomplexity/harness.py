"""Experiment orchestration: separation and solver sweeps, exponent fits, inequality audits."""
from __future__ import annotations

import io
import json
import math
import time
from dataclasses import asdict, dataclass, field, fields

import numpy as np
from scipy.stats import linregress

from .fooling import (FoolingPair, build_pair, path_integral, predicted_separation,
                      relative_info_residuals)
from .geometry import ProblemSpec, iroot_floor
from .information import (InfoOperator, StandardAtom, grid_points, quadrature_functionals, random_atoms,
                          uniform_grid_info)
from .solvers import (PolynomialCutoffField, Trajectory, grid_solver_box, reference_solve,
                      solve_adaptive_taylor, solve_nonadaptive_grid, sup_distance, taylor_charge)

SEPARATION_VARIANTS = ("thm1", "thm2i", "thm2ii", "d1", "control")
SOLVER_VARIANTS = ("solver-adaptive", "solver-nonadaptive")
CSV_HEADER = "n,measured,predicted,witness,residual_max,seconds"


class ConfigError(ValueError):
    """Invalid experiment configuration."""


class SweepError(RuntimeError):
    """A sweep row failed a hard check (residual, reference accuracy)."""

    def __init__(self, row: int, message: str):
        super().__init__(f"row {row}: {message}")
        self.row = row


@dataclass
class ExperimentConfig:
    """Everything needed to reproduce one sweep.

    ``atoms`` selects standard-atom placement: ``uniform`` (cell-centered
    grid over M1) or ``random`` (seeded, uniform over the support region of
    the construction).  ``k`` is the number of linear functionals (thm2ii,
    d1); ``-1`` means the largest count allowed by ``alpha_info``.
    """

    d: int
    r: int
    variant: str
    schedule: list
    D: float = 1.0
    a: float = 0.0
    b: float = 1.0
    eta: list | None = None
    M: list | None = None
    M1: list | None = None
    delta: float | None = None
    p: int = 2
    alpha_info: float | None = None
    k: int = 0
    atoms: str = "random"
    seed: int = 0
    tol: float = 1e-10
    samples: int = 2001
    quad_nodes: int = 13
    fit_fraction: float = 0.5
    slope_tol: float | None = None
    record_timing: bool = False
    out: str | None = None

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.variant not in SEPARATION_VARIANTS + SOLVER_VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}")
        sched = [int(n) for n in self.schedule]
        if any(n < 1 for n in sched) or any(b <= a for a, b in zip(sched, sched[1:])):
            raise ConfigError("schedule must be strictly increasing positive integers")
        if len(sched) < 4 and self.variant != "control":
            raise ConfigError("exponent fits need at least 4 budgets")
        self.schedule = sched
        if self.atoms not in ("uniform", "random"):
            raise ConfigError("atoms must be 'uniform' or 'random'")
        if not 0 < self.fit_fraction <= 1:
            raise ConfigError("fit_fraction must lie in (0, 1]")
        if self.variant == "thm2i" and self.d < 2:
            raise ConfigError("thm2i needs d >= 2")
        if self.variant == "d1" and self.d != 1:
            raise ConfigError("variant d1 needs d = 1")
        if self.variant == "thm2ii" and self.alpha_info is None:
            raise ConfigError("thm2ii needs alpha_info")
        if not self.seed >= 0:
            raise ConfigError("seed must be nonnegative")
        try:
            self.spec()
        except (ValueError, TypeError) as exc:
            raise ConfigError(str(exc)) from exc

    def spec(self) -> ProblemSpec:
        kw = {}
        if self.M is not None:
            kw["M"] = tuple(np.asarray(v, float) for v in self.M)
        if self.M1 is not None:
            kw["M1"] = tuple(np.asarray(v, float) for v in self.M1)
        p = self.p
        if self.variant == "thm2i":
            p = 1
        return ProblemSpec.create(self.d, self.r, D=self.D, a=self.a, b=self.b, eta=self.eta,
                                  delta=self.delta, p=p, **kw)

    @property
    def theory_slope(self) -> float:
        if self.variant in ("thm1", "thm2ii", "solver-nonadaptive"):
            return -self.r / self.d
        if self.variant == "thm2i":
            return -self.r / (self.d - 1)
        if self.variant in ("d1", "solver-adaptive"):
            return -float(self.r)
        return math.nan

    @property
    def tolerance(self) -> float:
        if self.slope_tol is not None:
            return self.slope_tol
        if self.d == 3 or self.variant == "thm2i" or self.variant in SOLVER_VARIANTS:
            return 0.3
        return 0.25

    def to_dict(self) -> dict:
        return asdict(self)

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        extra = set(data) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            with open(path) as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(data)


@dataclass
class Row:
    n: int
    measured: float
    predicted: float
    witness: float
    residual_max: float
    seconds: float


@dataclass
class ScalingRun:
    config: ExperimentConfig
    rows: list
    slope: float = math.nan
    stderr: float = math.nan
    intercept: float = math.nan
    flags: dict = field(default_factory=dict)

    @property
    def theory(self) -> float:
        return self.config.theory_slope

    @property
    def passed(self) -> bool:
        return all(self.flags.values())

    @property
    def verdict(self) -> str:
        if self.config.variant == "control":
            return "control" if self.passed else "fail"
        return "pass" if self.passed else "fail"

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# config={self.config.dumps()} seed={self.config.seed}\n")
        buf.write(CSV_HEADER + "\n")
        for row in self.rows:
            buf.write(",".join([str(row.n)] + [repr(float(v)) for v in
                                               (row.measured, row.predicted, row.witness,
                                                row.residual_max, row.seconds)]) + "\n")
        buf.write(f"# slope={self.slope!r} stderr={self.stderr!r} theory={self.theory!r} "
                  f"verdict={self.verdict}\n")
        flags = " ".join(f"{k}={'pass' if v else 'fail'}" for k, v in sorted(self.flags.items()))
        buf.write(f"# checks {flags}\n")
        return buf.getvalue()

    def write(self, path):
        with open(path, "w", newline="") as fh:
            fh.write(self.to_csv())


def read_csv(text: str):
    """(config dict or None, rows) from a sweep CSV."""
    config = None
    rows = []
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            if line.startswith("# config="):
                body = line[len("# config="):]
                config = json.loads(body[:body.rindex(" seed=")])
            continue
        if line == CSV_HEADER:
            continue
        parts = line.split(",")
        if len(parts) != 6:
            raise ValueError(f"malformed row: {line!r}")
        rows.append(Row(int(parts[0]), *(float(v) for v in parts[1:])))
    return config, rows


# --- fitting ---------------------------------------------------------------


def fit_exponent(points):
    """Least-squares slope of log(value) against log(n); returns (slope, stderr, intercept)."""
    pts = [(float(n), float(v)) for n, v in points]
    if len(pts) < 3:
        raise ValueError("need at least 3 points")
    if any(v <= 0 or n <= 0 for n, v in pts):
        raise ValueError("values and budgets must be positive")
    x = np.log([n for n, _ in pts])
    y = np.log([v for _, v in pts])
    res = linregress(x, y)
    return float(res.slope), float(res.stderr), float(res.intercept)


def fit_window(count: int, fraction: float = 0.5, minimum: int = 3) -> slice:
    """Indices of the largest ``fraction`` of a schedule (at least ``minimum`` entries)."""
    keep = max(minimum, math.ceil(fraction * count))
    return slice(max(0, count - keep), count)


# --- information ------------------------------------------------------------


def standard_atoms_for(cfg: ExperimentConfig, spec: ProblemSpec, count: int, rng) -> list:
    if count <= 0:
        return []
    if cfg.atoms == "uniform":
        atoms = uniform_grid_info(spec, count).standard_atoms
        return atoms
    lo, hi = support_region(cfg, spec, count)
    return random_atoms(rng, count, lo, hi)


def support_region(cfg: ExperimentConfig, spec: ProblemSpec, n: int):
    """Box containing every cell the construction for budget n can use."""
    if spec.d == 1:
        return spec.eta.copy(), spec.eta + spec.delta * (spec.b - spec.a)
    return spec.eta - spec.T, spec.eta.copy()


def linear_count(cfg: ExperimentConfig, n: int) -> int:
    if cfg.variant == "thm2i":
        return n
    if cfg.k >= 0:
        return cfg.k
    return int(math.floor(cfg.alpha_info * n ** (1.0 - 1.0 / cfg.d) + 1e-12))


def build_information(cfg: ExperimentConfig, spec: ProblemSpec, n: int) -> InfoOperator:
    """Information of cardinality n for one sweep row, seeded by (seed, n).

    Linear functionals are midpoint-rule discretizations of integrals
    against smooth random profiles; the profiles depend on the seed only,
    so they are the same functionals at every budget.
    """
    rng = np.random.default_rng([cfg.seed, n])
    k = linear_count(cfg, n)
    if k > n:
        raise ConfigError("more linear functionals than the budget")
    std = standard_atoms_for(cfg, spec, n - k, rng)
    if k == 0:
        return InfoOperator.from_atoms(std)
    lo, hi = support_region(cfg, spec, n)
    nodes = max(4, iroot_floor(cfg.quad_nodes * n, spec.d))
    lin = quadrature_functionals(np.random.default_rng(cfg.seed), k, lo, hi, nodes)
    if cfg.variant == "thm2i":
        return InfoOperator(tuple(lin), k=k)
    return InfoOperator.mixed(std, lin, alpha_info=cfg.alpha_info)


def check_residuals(pair: FoolingPair, N: InfoOperator, row: int) -> float:
    """Standard atoms must agree exactly; linear functionals to 1e-10 relative."""
    res, scale = relative_info_residuals(pair, N)
    ns = N.n - N.k
    if np.any(res[:ns] != 0.0):
        raise SweepError(row, f"standard information differs (max {np.max(np.abs(res[:ns]))})")
    if N.k and np.any(np.abs(res[ns:]) > 1e-10 * np.maximum(scale[ns:], 1e-300)):
        raise SweepError(row, "linear information residual above 1e-10 * scale")
    return float(np.max(np.abs(res))) if res.size else 0.0


# --- measurement ------------------------------------------------------------


def separation_scale(pair: FoolingPair) -> float:
    """A-priori magnitude of H integrated along one cell; sets the reference tolerance."""
    spec = pair.spec
    return pair.c_hat * float(np.max(pair.grid.scale)) ** spec.r * 0.0183 ** spec.d * (spec.b - spec.a)


def measure_separation(pair: FoolingPair, tol: float = 1e-10, samples: int = 2001):
    """(sup |z1 - z2|, z1, z2, absolute tolerance used) with z2 integrated as a deviation from z1."""
    spec = pair.spec
    breaks = pair.cell_breaks()
    max_step = float(breaks[1] - breaks[0]) / 4
    atol = tol * 10.0 * separation_scale(pair)
    z1 = Trajectory.from_path(pair.z1, spec.a, spec.b, spec.d)
    if pair.variant == "control":
        z2 = reference_solve(pair.f2, spec, tol=tol, base=pair.z1, atol=tol, max_step=max_step)
    else:
        z2 = reference_solve(pair.f2, spec, tol=tol, base=pair.z1, atol=atol, max_step=max_step)
    return sup_distance(z1, z2, samples), z1, z2, atol


def _timer(cfg):
    start = time.perf_counter()
    return lambda: (time.perf_counter() - start) if cfg.record_timing else 0.0


def run_separation_sweep(cfg: ExperimentConfig, log=None) -> ScalingRun:
    if cfg.variant not in SEPARATION_VARIANTS:
        raise ConfigError("separation sweeps need a construction variant")
    spec = cfg.spec()
    rows = []
    ok_pred = True
    for i, n in enumerate(cfg.schedule):
        elapsed = _timer(cfg)
        if cfg.variant == "control":
            pair = build_pair("control", spec, n=n)
            residual = 0.0
        else:
            N = build_information(cfg, spec, n)
            pair = build_pair(cfg.variant, spec, N, p=None if cfg.variant == "thm2ii" else cfg.p,
                              alpha_info=cfg.alpha_info)
            residual = check_residuals(pair, N, i)
        measured, _, _, atol = measure_separation(pair, cfg.tol, cfg.samples)
        if cfg.variant != "control" and not atol <= measured / 100:
            raise SweepError(i, f"reference tolerance {atol} is not 100x below the measured {measured}")
        predicted = predicted_separation(pair) if pair.variant == "thm1" else math.nan
        if not math.isnan(predicted) and measured < predicted:
            ok_pred = False
        rows.append(Row(n, measured, predicted, measured / 2, residual, elapsed()))
        if log:
            log(f"n={n} measured={measured:.6e} predicted={predicted:.6e}")
    return _finish(cfg, rows, ok_pred)


def _finish(cfg: ExperimentConfig, rows, ok_pred: bool) -> ScalingRun:
    run = ScalingRun(cfg, rows)
    if cfg.variant == "control":
        run.flags["control_zero"] = all(r.measured == 0.0 for r in rows)
        return run
    window = fit_window(len(rows), cfg.fit_fraction)
    sel = rows[window]
    run.slope, run.stderr, run.intercept = fit_exponent([(r.n, r.measured) for r in sel])
    run.flags["slope"] = bool(abs(run.slope - cfg.theory_slope) <= cfg.tolerance)
    run.flags["measured_ge_predicted"] = ok_pred
    if cfg.variant == "thm1":
        run.flags["monotone_witness"] = all(b.measured <= 1.5 * a.measured for a, b in zip(rows, rows[1:]))
    return run


# --- solver sweeps ----------------------------------------------------------


def adversary_pair_for_grid(spec: ProblemSpec, n: int):
    """thm1 pair built against the grid solver's sample points; returns (pair, node info)."""
    g = iroot_floor(n, spec.d)
    lo, hi = grid_solver_box(spec)
    pts = grid_points(lo, hi, g)
    N = InfoOperator.from_atoms([StandardAtom(tuple(y), 0) for y in pts])
    full = InfoOperator.from_atoms([StandardAtom(tuple(y), c) for y in pts for c in range(spec.d)])
    return build_pair("thm1", spec, N, p=spec.p), full


def run_solver_sweep(cfg: ExperimentConfig, log=None) -> ScalingRun:
    if cfg.variant not in SOLVER_VARIANTS:
        raise ConfigError("solver sweeps need a solver variant")
    spec = cfg.spec()
    rows = []
    ok_pred = True
    if cfg.variant == "solver-adaptive":
        field_ = PolynomialCutoffField(spec)
        ref = reference_solve(field_, spec, tol=cfg.tol * 1e-2)
        charge = taylor_charge(spec.d, spec.r)
        for i, n in enumerate(cfg.schedule):
            elapsed = _timer(cfg)
            steps = n // charge
            if steps < 1:
                raise ConfigError(f"budget {n} below one Taylor step ({charge} functionals)")
            traj = solve_adaptive_taylor(field_, spec, steps)
            err = sup_distance(traj, ref, cfg.samples)
            if not cfg.tol * 1e-2 <= err / 100:
                raise SweepError(i, f"reference tolerance not 100x below the error {err}")
            rows.append(Row(traj.info_count, err, math.nan, err / 2, 0.0, elapsed()))
            if log:
                log(f"n={traj.info_count} error={err:.6e}")
        return _finish(cfg, rows, ok_pred)
    for i, n in enumerate(cfg.schedule):
        elapsed = _timer(cfg)
        pair, full = adversary_pair_for_grid(spec, n)
        residual = check_residuals(pair, full, i)
        _, z1, z2, atol = measure_separation(pair, cfg.tol, cfg.samples)
        approx = solve_nonadaptive_grid(pair.f2, spec, n)
        err = max(sup_distance(approx, z1, cfg.samples), sup_distance(approx, z2, cfg.samples))
        if not atol <= err / 100:
            raise SweepError(i, f"reference tolerance {atol} is not 100x below the error {err}")
        # no algorithm using these samples beats half the separation
        predicted = predicted_separation(pair) / 2
        if err < predicted:
            ok_pred = False
        rows.append(Row(n, err, predicted, err / 2, residual, elapsed()))
        if log:
            log(f"n={n} error={err:.6e}")
    return _finish(cfg, rows, ok_pred)


def run_sweep(cfg: ExperimentConfig, log=None) -> ScalingRun:
    if cfg.variant in SOLVER_VARIANTS:
        return run_solver_sweep(cfg, log)
    return run_separation_sweep(cfg, log)


# --- audit ------------------------------------------------------------------


@dataclass
class AuditCheck:
    name: str
    passed: bool
    lhs: float
    rhs: float


@dataclass
class AuditReport:
    checks: list

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def lines(self):
        return [f"{c.name}: {'pass' if c.passed else 'fail'} lhs={c.lhs!r} rhs={c.rhs!r}" for c in self.checks]


def closed_form_integral(pair: FoolingPair) -> float:
    """Closed form of the integral of H along z1: C (T/(2pm))^r h(1/2)^(d-1) c_bar * ones * T/(2 Delta pm)."""
    if pair.variant == "control":
        return 0.0
    spec = pair.spec
    return predicted_separation(pair) * (1.0 + spec.L * (spec.b - spec.a))


def audit_inequalities(pair: FoolingPair, z1: Trajectory, z2: Trajectory, samples: int = 4001,
                       closed_form: float | None = None, rel_tol: float = 1e-6) -> AuditReport:
    """Check the integral lower bounds on a thm1 (or control) pair.

    (i) sup |z1 - z2| >= |int_a^b H(z1)| / (1 + L (b - a));
    (ii) the quadrature of int_a^b H(z1) equals the closed form to ``rel_tol``;
    (iii) sup over [t1, t2] of |z1 - z2| >= |int_t1^t2 H(z1)| / (2 + L (t2 - t1)).
    """
    if pair.variant not in ("thm1", "control"):
        raise ValueError("the audit applies to thm1 and control pairs")
    spec = pair.spec
    L = spec.L
    total = path_integral(pair)
    cf = closed_form_integral(pair) if closed_form is None else closed_form
    sup_all = sup_distance(z1, z2, samples)
    checks = [AuditCheck("lower_bound_ab", sup_all >= abs(total) / (1 + L * (spec.b - spec.a)),
                         sup_all, abs(total) / (1 + L * (spec.b - spec.a)))]
    if cf == 0.0:
        rel_ok = total == 0.0
        rel = abs(total)
    else:
        rel = abs(total - cf) / abs(cf)
        rel_ok = rel <= rel_tol
    checks.append(AuditCheck("closed_form", rel_ok, total, cf))
    t1, t2 = pair.crossing_times
    part = path_integral(pair, t1, t2)
    ts = np.linspace(t1, t2, samples)
    if z1.base is not None and z1.base is z2.base:
        diff = z1.deviation(ts) - z2.deviation(ts)
    else:
        diff = z1(ts) - z2(ts)
    sup_part = float(np.max(np.abs(diff)))
    bound = abs(part) / (2 + L * (t2 - t1))
    checks.append(AuditCheck("lower_bound_interval", sup_part >= bound, sup_part, bound))
    return AuditReport(checks)
