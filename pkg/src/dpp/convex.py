"""Drift-plus-penalty for deterministic convex programs.

Minimize ``f(x)`` subject to ``g_k(x) <= c_k``, ``w_i(x) = d_i`` and
``x in X``.  Each slot minimizes ``V f + sum Q_k g_k + sum Z_i w_i`` over
``X``, updates the queues with the resulting constraint values, and keeps
the running average ``xbar`` which is what converges.

The per-slot minimization is done numerically by :func:`inner_minimize`.
Its certified suboptimality on boxes is recorded per slot in
``Trace.inner_gap`` so bound checks can account for it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalError, ValidationError
from .functions import Box, ConvexFunction, ProjectableSet, weighted_sum
from .queues import QueueState, update_equality, update_inequality
from .trace import Trace


@dataclass
class ConvexProgram:
    """``min f(x)`` s.t. ``g_k(x) <= c_k``, ``w_i(x) = d_i``, ``x in feasible_set``.

    Equality functions must be affine so that ``Z_i w_i`` stays convex for
    either sign of ``Z_i``.
    """

    f: ConvexFunction
    feasible_set: Box | ProjectableSet
    g: list = field(default_factory=list)
    c: np.ndarray = field(default_factory=lambda: np.zeros(0))
    w: list = field(default_factory=list)
    d: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        self.g = list(self.g)
        self.w = list(self.w)
        self.c = np.asarray(self.c, dtype=float).reshape(-1)
        self.d = np.asarray(self.d, dtype=float).reshape(-1)
        n = self.feasible_set.dim
        if self.f.dim != n:
            raise ValidationError(f"objective has dimension {self.f.dim}, feasible set has {n}")
        if len(self.g) != self.c.size:
            raise ValidationError(f"{len(self.g)} constraint functions but {self.c.size} constants c")
        if len(self.w) != self.d.size:
            raise ValidationError(f"{len(self.w)} equality functions but {self.d.size} constants d")
        for k, gk in enumerate(self.g):
            if gk.dim != n:
                raise ValidationError(f"constraint {k + 1} has dimension {gk.dim}, expected {n}")
        for i, wi in enumerate(self.w):
            if wi.dim != n:
                raise ValidationError(f"equality {i + 1} has dimension {wi.dim}, expected {n}")
            if not wi.is_affine:
                raise ValidationError(f"equality function {i + 1} must be affine")
        if not (np.all(np.isfinite(self.c)) and np.all(np.isfinite(self.d))):
            raise ValidationError("constraint constants must be finite")

    @property
    def N(self) -> int:
        return self.feasible_set.dim

    @property
    def K(self) -> int:
        return len(self.g)

    @property
    def M(self) -> int:
        return len(self.w)


@dataclass
class InnerSolverParams:
    """Settings for the per-slot projected subgradient solver.

    ``c0`` defaults to the diameter of the feasible set.  The step on
    iteration ``j`` of an epoch is ``c0 / 2**epoch / sqrt(j)``; each epoch of
    ``restart_every`` iterations restarts from the best point so far.  The
    solver stops early once the certified remaining improvement is at most
    ``tol``.
    """

    max_iters: int = 200
    c0: float | None = None
    tol: float = 1e-9
    restart_every: int = 10

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValidationError("max_iters must be at least 1")
        if self.restart_every < 1:
            raise ValidationError("restart_every must be at least 1")
        if self.c0 is not None and not self.c0 > 0:
            raise ValidationError("c0 must be positive")
        if not self.tol >= 0:
            raise ValidationError("tol must be nonnegative")


@dataclass
class InnerResult:
    x: np.ndarray
    value: float
    gap: float  # certified bound on value - min, NaN when the set is not a box
    iterations: int


def per_slot_objective(program: ConvexProgram, queues: QueueState, v: float) -> ConvexFunction:
    """``x -> v f(x) + sum Q_k g_k(x) + sum Z_i w_i(x)``."""
    if queues.K != program.K or queues.M != program.M:
        raise ValidationError(
            f"queue state has (K={queues.K}, M={queues.M}), program has "
            f"(K={program.K}, M={program.M})"
        )
    if not v > 0:
        raise ValidationError(f"v must be positive, got {v!r}")
    return _objective(program, queues.ineq, queues.eq, v)


def _objective(program, q, z, v):
    terms = [(v, program.f)]
    terms += [(float(qk), gk) for qk, gk in zip(q, program.g)]
    terms += [(float(zi), wi) for zi, wi in zip(z, program.w)]
    return weighted_sum(terms)


def _box_gap(g, x, lo, hi):
    # max over y in the box of <g, x - y>; bounds f(x) - min f for convex f
    return float(np.maximum(g * (x - lo), g * (x - hi)).sum())


def solve_inner(objective: ConvexFunction, feasible_set, params: InnerSolverParams) -> InnerResult:
    """Restarted projected subgradient descent; returns the best iterate."""
    is_box = isinstance(feasible_set, Box)
    if is_box:
        lo, hi = feasible_set.lower, feasible_set.upper
    c0 = params.c0 if params.c0 is not None else feasible_set.diameter()
    x = feasible_set.center()
    fx = objective(x)
    if not math.isfinite(fx):
        raise NumericalError("objective is not finite at the start point", iterate=x)
    best_x, best_f = x, fx
    cert = math.inf  # min over visited points of gap(x) - f(x)
    it = 0
    epoch = 0
    while it < params.max_iters:
        x = best_x
        fx = best_f
        scale = c0 / 2.0**epoch
        for j in range(1, params.restart_every + 1):
            if it >= params.max_iters:
                break
            g = objective.subgradient(x)
            if is_box:
                if j == 1:
                    # certificate once per epoch; it costs as much as a step
                    cert = min(cert, _box_gap(g, x, lo, hi) - fx)
                    if cert + best_f <= params.tol:
                        return InnerResult(best_x, best_f, max(cert + best_f, 0.0), it)
                g = np.where(((x <= lo) & (g > 0)) | ((x >= hi) & (g < 0)), 0.0, g)
            norm = math.sqrt(float(g @ g))
            if not math.isfinite(norm):
                raise NumericalError("subgradient is not finite", iterate=x)
            if norm == 0.0:
                # stationary point of a convex function, hence a minimizer
                return InnerResult(x, fx, 0.0, it)
            x = feasible_set.project(x - (scale / math.sqrt(j) / norm) * g)
            fx = objective(x)
            it += 1
            if not math.isfinite(fx):
                raise NumericalError("objective is not finite at an iterate", iterate=x)
            if fx < best_f:
                best_x, best_f = x, fx
        epoch += 1
    if is_box:
        g = objective.subgradient(best_x)
        cert = min(cert, _box_gap(g, best_x, lo, hi) - best_f)
        gap = max(cert + best_f, 0.0)
    else:
        gap = math.nan
    return InnerResult(best_x, best_f, gap, it)


def inner_minimize(objective: ConvexFunction, feasible_set, params: InnerSolverParams | None = None) -> np.ndarray:
    """Approximate minimizer of ``objective`` over ``feasible_set``."""
    return solve_inner(objective, feasible_set, params or InnerSolverParams()).x


def run_convex(
    program: ConvexProgram,
    v: float,
    t_max: int,
    inner: InnerSolverParams | None = None,
) -> Trace:
    """Deterministic drift-plus-penalty loop with running-average primal recovery."""
    if not v > 0:
        raise ValidationError(f"v must be positive, got {v!r}")
    if t_max < 1:
        raise ValidationError(f"t_max must be positive, got {t_max!r}")
    inner = inner or InnerSolverParams()
    k, m, n = program.K, program.M, program.N
    c = [float(ci) for ci in program.c]
    d = [float(di) for di in program.d]
    q = np.zeros(k)
    z = np.zeros(m)
    xs = np.empty((t_max, n))
    xbar = np.empty((t_max, n))
    ys = np.empty((t_max, k + 1))
    ws = np.empty((t_max, m))
    queues = np.zeros((t_max + 1, k))
    zqueues = np.zeros((t_max + 1, m))
    gaps = np.empty(t_max)
    avg = np.zeros(n)
    for tau in range(t_max):
        obj = _objective(program, q, z, v)
        try:
            res = solve_inner(obj, program.feasible_set, inner)
        except NumericalError as exc:
            exc.slot = tau
            raise
        x = res.x
        ys[tau, 0] = program.f(x)
        for i, gk in enumerate(program.g):
            ys[tau, i + 1] = gk(x)
        for i, wi in enumerate(program.w):
            ws[tau, i] = wi(x)
        for i in range(k):
            q[i] = update_inequality(q[i], ys[tau, i + 1], c[i])
        for i in range(m):
            z[i] = update_equality(z[i], ws[tau, i], d[i])
        avg = avg * (tau / (tau + 1)) + x / (tau + 1)
        xs[tau] = x
        xbar[tau] = avg
        queues[tau + 1] = q
        zqueues[tau + 1] = z
        gaps[tau] = res.gap
    return Trace(
        v=float(v),
        c=program.c.copy(),
        d=program.d.copy(),
        y=ys,
        w=ws,
        queues=queues,
        zqueues=zqueues,
        x=xs,
        xbar=xbar,
        inner_gap=gaps,
    )


def _sup_deviation(fn, const, feasible_set):
    if isinstance(feasible_set, Box):
        lo, hi = fn.range_on(feasible_set)
    elif fn.bounds is not None:
        lo, hi = fn.bounds
    else:
        raise ValidationError(
            "constraint ranges over a non-box set must be declared (bounds=(lo, hi))"
        )
    return max(abs(lo - const), abs(hi - const))


def compute_B_convex(program: ConvexProgram) -> float:
    """``0.5 * sum_k (sup |g_k - c_k|)^2 + 0.5 * sum_i (sup |w_i - d_i|)^2`` over the set.

    Affine and diagonal-quadratic ranges on boxes are exact; anything else
    uses the declared ``bounds``.
    """
    total = 0.0
    for gk, ck in zip(program.g, program.c):
        total += _sup_deviation(gk, ck, program.feasible_set) ** 2
    for wi, di in zip(program.w, program.d):
        total += _sup_deviation(wi, di, program.feasible_set) ** 2
    return 0.5 * total


@dataclass
class JensenReport:
    t: int
    f_xbar: float
    y0_bar: float
    g_xbar: np.ndarray
    y_bar: np.ndarray
    tol: float = 1e-9

    @property
    def objective_holds(self) -> bool:
        return self.f_xbar <= self.y0_bar + self.tol

    @property
    def constraints_hold(self) -> bool:
        return bool(np.all(self.g_xbar <= self.y_bar + self.tol))

    @property
    def holds(self) -> bool:
        return self.objective_holds and self.constraints_hold


def jensen_check(program: ConvexProgram, trace: Trace, t: int, tol: float = 1e-9) -> JensenReport:
    """Compare ``f(xbar(t))`` with ``ybar_0(t)`` and ``g_k(xbar(t))`` with ``ybar_k(t)``."""
    xb = trace.x_average(t)
    avg = trace.averages()[t - 1]
    return JensenReport(
        t=t,
        f_xbar=program.f(xb),
        y0_bar=float(avg[0]),
        g_xbar=np.array([gk(xb) for gk in program.g]),
        y_bar=np.asarray(avg[1:], dtype=float),
        tol=tol,
    )
