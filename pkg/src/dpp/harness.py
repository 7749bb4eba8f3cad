"""Bound verification: run an engine at ``V = 1/eps`` and compare with the caps.

The caps are ``B / V`` on the objective gap and
``(V |mu| + sqrt(V^2 |mu|^2 + 2 B t)) / t`` on each constraint violation,
with ``mu`` a certified multiplier from the oracle.  Each check carries an
explicit slack:

* inexact inner minimization adds its worst certified gap ``C`` to ``B``
  (a per-slot additive error) and ``C / V`` to the objective cap;
* the oracle's error bar is added to the objective cap, and a negative
  multiplier margin ``-m`` is folded into ``B`` as ``V m``;
* stochastic runs compare means over seeds and add ``3 std / sqrt(R)``.

A violation or queue-norm check is ``skipped`` when no multiplier is
certified; it never passes on missing data.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import oracle as oracle_mod
from .convex import compute_B_convex, jensen_check, run_convex
from .distributed import DistributedResult, centralized_program, run_distributed
from .errors import OracleError, ValidationError
from .lp import LinearProgram, compute_B_lp, run_lp
from .problem_io import LoadedProblem
from .queues import queue_norm_bound
from .stochastic import compute_B, run
from .trace import fmt

DEFAULT_SEEDS = tuple(range(1, 31))
ABS_TOL = 1e-9
CONSENSUS_FACTOR = 5.0


def convergence_time(eps: float) -> int:
    """``ceil(1 / eps^2)``, immune to ``1 / 0.1**2 = 100.00000000000001``."""
    check_epsilon(eps)
    raw = 1.0 / (eps * eps)
    near = round(raw)
    if abs(raw - near) <= 1e-9 * max(1.0, raw):
        return max(1, int(near))
    return max(1, math.ceil(raw))


def checkpoints(eps: float) -> list[int]:
    t0 = convergence_time(eps)
    return [math.ceil(t0 / 4), t0, 2 * t0, 4 * t0]


def default_t_max(eps: float) -> int:
    return 4 * convergence_time(eps)


def check_epsilon(eps):
    if not (isinstance(eps, (int, float)) and 0 < eps <= 1):
        raise ValidationError(f"epsilon must lie in (0, 1], got {eps!r}")


def threads() -> int:
    try:
        return max(1, int(os.environ.get("DPP_THREADS", "1")))
    except ValueError:
        return 1


def parallel_map(fn, items):
    items = list(items)
    n = min(threads(), len(items))
    if n <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


@dataclass
class CheckRow:
    t: int
    check: str
    measured: float
    cap: float
    slack: float
    status: str  # "pass", "fail" or "skipped"


def _row(t, check, measured, cap, slack):
    ok = measured <= cap + slack
    return CheckRow(t, check, float(measured), float(cap), float(slack), "pass" if ok else "fail")


@dataclass
class BoundReport:
    kind: str
    epsilon: float
    v: float
    t_max: int
    B: float
    B_eff: float
    optimum: float | None
    error_bar: float
    mu: list | None
    mu_certified: bool
    margin: float | None
    inner_gap: float
    rows: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r.status != "fail" for r in self.rows)

    def csv_lines(self) -> list[str]:
        lines = ["t,check,measured,cap,slack,status"]
        for r in self.rows:
            lines.append(",".join([str(r.t), r.check, fmt(r.measured), fmt(r.cap), fmt(r.slack), r.status]))
        return lines

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "epsilon": self.epsilon,
            "V": self.v,
            "t_max": self.t_max,
            "B": self.B,
            "B_eff": self.B_eff,
            "optimum": self.optimum,
            "error_bar": self.error_bar,
            "mu": self.mu,
            "mu_certified": self.mu_certified,
            "margin": self.margin,
            "inner_gap": self.inner_gap,
            "passed": self.passed,
            "checks": [r.__dict__ for r in self.rows],
        }


def compute_B_for(loaded: LoadedProblem) -> float:
    if loaded.kind == "stochastic":
        return compute_B(loaded.problem)
    if loaded.kind == "lp":
        return compute_B_lp(loaded.problem)
    if loaded.kind == "convex":
        return compute_B_convex(loaded.problem)
    raise ValidationError(f"no drift constant for kind {loaded.kind!r}")


def oracle_for(loaded: LoadedProblem, resolution=None):
    """Oracle optimum with multiplier, or ``None`` if the instance is out of its reach."""
    try:
        if loaded.kind == "distributed":
            program, _ = centralized_program(loaded.problem)
            return oracle_mod.static_optimum_grid(program, resolution)
        return oracle_mod.optimum(loaded.problem, resolution)
    except OracleError:
        return None


def _engine_runs(loaded, v, t_max, seeds):
    p = loaded.problem
    if loaded.kind == "stochastic":
        return parallel_map(lambda s: run(p, v, t_max, s), seeds)
    if loaded.kind == "lp":
        return [run_lp(p, v, t_max)]
    if loaded.kind == "convex":
        return [run_convex(p, v, t_max, loaded.inner)]
    raise ValidationError(f"kind {loaded.kind!r} is not handled by run/sweep; use the distributed command")


def _margin_sd(values):
    r = len(values)
    if r < 2:
        return 0.0
    return 3.0 * float(np.std(values, axis=0, ddof=1)) / math.sqrt(r)


def evaluate(loaded, traces, eps, B, orc, ts) -> BoundReport:
    """Build the report rows at the checkpoints ``ts`` from finished runs."""
    v = 1.0 / eps
    stochastic = loaded.kind == "stochastic"
    inner_gap = max(tr.max_inner_gap() for tr in traces)
    if math.isnan(inner_gap):
        inner_gap = math.inf
    certified = orc is not None and orc.certified
    mu_norm = float(np.linalg.norm(orc.mu)) if certified else math.nan
    deficit = max(0.0, -orc.margin) if certified else 0.0
    b_eff = B + inner_gap + v * deficit
    err = orc.error_bar if orc is not None else math.nan
    k = traces[0].K
    m = traces[0].M
    rows = []
    for t in ts:
        avgs = np.array([tr.averages()[t - 1] for tr in traces])
        if orc is not None:
            gaps = avgs[:, 0] - orc.optimum
            slack = inner_gap / v + err + _margin_sd(avgs[:, 0]) + ABS_TOL
            rows.append(_row(t, "objective_gap", float(np.mean(gaps)), B / v, slack))
        else:
            rows.append(CheckRow(t, "objective_gap", float(np.mean(avgs[:, 0])), B / v, 0.0, "skipped"))
        if certified:
            cap = queue_norm_bound(v, mu_norm, B, t)
            cap_eff = queue_norm_bound(v, mu_norm, b_eff, t)
        for i in range(k):
            viol = avgs[:, i + 1] - traces[0].c[i]
            name = f"violation_{i + 1}"
            if certified:
                slack = (cap_eff - cap) / t + _margin_sd(viol) + ABS_TOL
                rows.append(_row(t, name, float(np.mean(viol)), cap / t, slack))
            else:
                rows.append(CheckRow(t, name, float(np.mean(viol)), math.nan, 0.0, "skipped"))
        for i in range(m):
            dev = np.array([abs(tr.w_averages()[t - 1, i] - tr.d[i]) for tr in traces])
            name = f"equality_{i + 1}"
            if certified:
                slack = (cap_eff - cap) / t + _margin_sd(dev) + ABS_TOL
                rows.append(_row(t, name, float(np.mean(dev)), cap / t, slack))
            else:
                rows.append(CheckRow(t, name, float(np.mean(dev)), math.nan, 0.0, "skipped"))
        if certified:
            qs = np.array([np.concatenate([tr.queues[t], tr.zqueues[t]]) for tr in traces])
            mean_q = qs.mean(axis=0)
            spread = 0.0
            if len(traces) > 1:
                spread = 3.0 * float(np.linalg.norm(qs.std(axis=0, ddof=1))) / math.sqrt(len(traces))
            slack = (cap_eff - cap) + spread + 1e-6 * cap
            rows.append(_row(t, "queue_norm", float(np.linalg.norm(mean_q)), cap, slack))
        else:
            rows.append(CheckRow(t, "queue_norm", math.nan, math.nan, 0.0, "skipped"))
        if not stochastic:
            program = loaded.problem.to_convex() if isinstance(loaded.problem, LinearProgram) else loaded.problem
            rep = jensen_check(program, traces[0], t)
            excess = max([rep.f_xbar - rep.y0_bar] + list(rep.g_xbar - rep.y_bar))
            rows.append(_row(t, "jensen", excess, 0.0, ABS_TOL))
    return BoundReport(
        kind=loaded.kind,
        epsilon=float(eps),
        v=v,
        t_max=len(traces[0]),
        B=B,
        B_eff=b_eff,
        optimum=None if orc is None else orc.optimum,
        error_bar=err,
        mu=None if orc is None or orc.mu is None else [float(x) for x in orc.mu],
        mu_certified=certified,
        margin=None if orc is None else orc.margin,
        inner_gap=inner_gap,
        rows=rows,
    )


def run_experiment(loaded: LoadedProblem, eps: float, t_max=None, seeds=DEFAULT_SEEDS, orc=None):
    """Run the engine(s) and evaluate the bounds at every checkpoint within ``t_max``."""
    check_epsilon(eps)
    t_max = default_t_max(eps) if t_max is None else int(t_max)
    if t_max < 1:
        raise ValidationError(f"t_max must be positive, got {t_max}")
    seeds = list(seeds)
    if loaded.kind == "stochastic" and not seeds:
        raise ValidationError("seeds: need at least one seed")
    B = compute_B_for(loaded)
    if orc is None:
        orc = oracle_for(loaded)
    traces = _engine_runs(loaded, 1.0 / eps, t_max, seeds)
    ts = sorted({t for t in checkpoints(eps) if t <= t_max} | {t_max})
    return traces, evaluate(loaded, traces, eps, B, orc, ts)


SWEEP_HEADER = "epsilon,t,obj_gap,max_violation,cap_obj,cap_violation,pass"


@dataclass
class SweepRow:
    epsilon: float
    t: int
    obj_gap: float
    max_violation: float
    cap_obj: float
    cap_violation: float
    passed: bool

    def csv(self) -> str:
        return ",".join(
            [fmt(self.epsilon), str(self.t), fmt(self.obj_gap), fmt(self.max_violation),
             fmt(self.cap_obj), fmt(self.cap_violation), "true" if self.passed else "false"]
        )


def sweep(loaded: LoadedProblem, epsilons, seeds=DEFAULT_SEEDS) -> list[SweepRow]:
    """One row per ``eps``, each run to ``t = ceil(1/eps^2)``."""
    epsilons = list(epsilons)
    if len(epsilons) < 2:
        raise ValidationError("epsilons: a sweep needs at least two values")
    for e in epsilons:
        check_epsilon(e)
    orc = oracle_for(loaded)
    rows = []
    for eps in epsilons:
        t = convergence_time(eps)
        _, rep = run_experiment(loaded, eps, t_max=t, seeds=seeds, orc=orc)
        at_t = [r for r in rep.rows if r.t == t]
        obj = next(r for r in at_t if r.check == "objective_gap")
        viols = [r for r in at_t if r.check.startswith(("violation_", "equality_"))]
        max_v = max((r.measured for r in viols), default=0.0)
        cap_v = viols[0].cap if viols else 0.0
        rows.append(
            SweepRow(
                epsilon=float(eps),
                t=t,
                obj_gap=obj.measured if obj.status != "skipped" else math.nan,
                max_violation=max_v,
                cap_obj=rep.B / rep.v,
                cap_violation=cap_v,
                passed=all(r.status != "fail" for r in at_t),
            )
        )
    return rows


# ---------------------------------------------------------------- distributed


def distributed_report(result: DistributedResult, eps: float, orc, ts) -> BoundReport:
    """Consensus gap, summed-objective gap and constraint violation within ``5 eps``."""
    v = 1.0 / eps
    cap = CONSENSUS_FACTOR * eps
    inner_gap = max(tr.max_inner_gap() for tr in result.traces)
    inner_slack = len(result.traces) * inner_gap / v
    t0 = convergence_time(eps)
    rows = []
    for t in ts:
        checked = t >= t0  # the O(eps) guarantee starts at the convergence time

        def add(name, measured, slack):
            if checked:
                rows.append(_row(t, name, measured, cap, slack))
            else:
                rows.append(CheckRow(t, name, float(measured), cap, float(slack), "skipped"))

        add("consensus_gap", result.consensus_gap(t), ABS_TOL)
        obj = result.sum_objective(t)
        if orc is not None:
            add("objective_gap", abs(obj - orc.optimum), inner_slack + orc.error_bar + ABS_TOL)
        else:
            rows.append(CheckRow(t, "objective_gap", obj, cap, 0.0, "skipped"))
        add("constraint_violation", result.max_constraint_violation(t), ABS_TOL)
    return BoundReport(
        kind="distributed",
        epsilon=float(eps),
        v=v,
        t_max=len(result),
        B=math.nan,
        B_eff=math.nan,
        optimum=None if orc is None else orc.optimum,
        error_bar=math.nan if orc is None else orc.error_bar,
        mu=None,
        mu_certified=False,
        margin=None,
        inner_gap=inner_gap,
        rows=rows,
    )


def run_distributed_experiment(loaded: LoadedProblem, eps: float, t_max=None, orc=None):
    check_epsilon(eps)
    t_max = default_t_max(eps) if t_max is None else int(t_max)
    if orc is None:
        orc = oracle_for(loaded)
    result = run_distributed(loaded.problem, 1.0 / eps, t_max, loaded.inner)
    ts = sorted({t for t in checkpoints(eps) if t <= t_max} | {t_max})
    return result, distributed_report(result, eps, orc, ts)


__all__ = [
    "BoundReport",
    "CheckRow",
    "DEFAULT_SEEDS",
    "SweepRow",
    "checkpoints",
    "convergence_time",
    "default_t_max",
    "distributed_report",
    "evaluate",
    "oracle_for",
    "run_distributed_experiment",
    "run_experiment",
    "sweep",
]
