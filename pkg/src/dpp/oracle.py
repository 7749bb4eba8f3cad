"""Brute-force ground truth for desk-scale instances.

Nothing here calls the engines.  Deterministic programs are solved by
exhaustive grid search over the box with a Lipschitz error bar.  Stochastic
problems are linear programs over stationary randomized policies; they are
solved exactly by enumerating the vertices of the dual function's
linearity regions and recovering a primal policy on the optimal face, or by
a product-of-simplices grid for the tiniest instances.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .convex import ConvexProgram
from .errors import OracleError, ValidationError
from .functions import Box, DiagQuadratic, weighted_sum
from .lp import LinearProgram
from .stochastic import StochasticProblem

_CHUNK = 1 << 18
MULTIPLIER_TOL = 1e-6


@dataclass
class OracleResult:
    """Optimum with an upper-bound witness and a certified lower bound.

    ``optimum`` is attained by ``optimizer`` (a point, or per-event option
    probabilities for stochastic problems); ``lower <= true optimum``;
    ``error_bar = optimum - lower``.
    """

    optimum: float
    optimizer: object
    resolution: float
    error_bar: float
    lower: float
    mu: np.ndarray | None = None
    margin: float | None = None
    extra: dict = field(default_factory=dict)

    @property
    def certified(self) -> bool:
        return self.mu is not None and self.margin is not None and self.margin >= -MULTIPLIER_TOL

    def to_json(self) -> dict:
        opt = self.optimizer
        if isinstance(opt, np.ndarray):
            opt = opt.tolist()
        elif isinstance(opt, list):
            opt = [np.asarray(row).tolist() for row in opt]
        return {
            "optimum": float(self.optimum),
            "optimizer": opt,
            "mu": None if self.mu is None else [float(m) for m in self.mu],
            "margin": None if self.margin is None else float(self.margin),
            "resolution": float(self.resolution),
            "error_bar": float(self.error_bar),
        }


# ---------------------------------------------------------------- grid oracle


def default_resolution(n: int) -> float:
    return 1e-3 if n <= 2 else 1e-2


def _as_program(obj) -> ConvexProgram:
    if isinstance(obj, LinearProgram):
        return obj.to_convex()
    if isinstance(obj, ConvexProgram):
        return obj
    raise ValidationError(f"expected a ConvexProgram or LinearProgram, got {type(obj).__name__}")


def _axes(box: Box, h: float):
    # lower + k h, then the upper end; halving h gives a superset
    axes = []
    for lo, hi in zip(box.lower, box.upper):
        m = int(math.ceil((hi - lo) / h - 1e-12))
        pts = lo + h * np.arange(m)
        axes.append(np.append(pts, hi))
    return axes


def _grid_chunks(axes):
    sizes = [a.size for a in axes]
    total = math.prod(sizes)
    for start in range(0, total, _CHUNK):
        flat = np.arange(start, min(start + _CHUNK, total))
        idx = np.unravel_index(flat, sizes)
        yield np.stack([a[i] for a, i in zip(axes, idx)], axis=1)


def _lipschitz(fn, box):
    return fn.lipschitz_on(box)


def _scan(program: ConvexProgram, axes, eq_tol, relax):
    """Best strictly feasible point and best relaxed-feasible value over a grid."""
    best_val, best_pt = math.inf, None
    relaxed_val = math.inf
    for pts in _grid_chunks(axes):
        fv = program.f.evaluate_many(pts)
        ok = np.ones(len(pts), dtype=bool)
        ok_relaxed = np.ones(len(pts), dtype=bool)
        for gk, ck, rk in zip(program.g, program.c, relax["g"]):
            gv = gk.evaluate_many(pts)
            ok &= gv <= ck
            ok_relaxed &= gv <= ck + rk
        for wi, di, ri, ti in zip(program.w, program.d, relax["w"], eq_tol):
            dev = np.abs(wi.evaluate_many(pts) - di)
            ok &= dev <= ti
            ok_relaxed &= dev <= ri
        if np.any(ok_relaxed):
            relaxed_val = min(relaxed_val, float(np.min(fv[ok_relaxed])))
        if np.any(ok):
            cand = np.where(ok, fv, np.inf)
            i = int(np.argmin(cand))
            if cand[i] < best_val:
                best_val, best_pt = float(cand[i]), pts[i].copy()
    return best_val, best_pt, relaxed_val


def static_optimum_grid(program, resolution: float | None = None) -> OracleResult:
    """Exhaustive grid search with one refinement pass around the best cell.

    Parameters
    ----------
    program : ConvexProgram or LinearProgram
        Box feasible set, ``N <= 4``.
    resolution : float, optional
        Grid step ``h``; defaults to 1e-3 for ``N <= 2`` and 1e-2 otherwise.

    Notes
    -----
    Every point of the box is within ``h / 2`` of a grid point in each
    coordinate, so with ``L`` the largest ``||grad||_1`` over the box a
    constraint can drop by at most ``L_g h / 2`` and the objective by
    ``L_f h / 2`` when moving to the nearest grid point.  The lower bound is
    the best objective over points feasible for the constraints relaxed by
    that amount, minus ``L_f h / 2``.
    """
    program = _as_program(program)
    box = program.feasible_set
    if not isinstance(box, Box):
        raise OracleError("grid oracle needs a box feasible set")
    n = box.dim
    if n > 4:
        raise OracleError(f"grid oracle is limited to N <= 4, got N = {n}")
    h = default_resolution(n) if resolution is None else float(resolution)
    if not h > 0:
        raise ValidationError("resolution must be positive")
    half = 0.5 * h
    lf = _lipschitz(program.f, box)
    relax = {
        "g": [_lipschitz(gk, box) * half for gk in program.g],
        "w": [_lipschitz(wi, box) * half for wi in program.w],
    }
    eq_tol = relax["w"]
    best_val, best_pt, relaxed_val = _scan(program, _axes(box, h), eq_tol, relax)
    if best_pt is None:
        raise OracleError("no feasible point found at this resolution")

    # refinement: h / 10 over the neighbouring cells
    lo = np.maximum(best_pt - h, box.lower)
    hi = np.minimum(best_pt + h, box.upper)
    sub_axes = []
    for a, b in zip(lo, hi):
        sub_axes.append(np.linspace(a, b, 21) if b > a else np.array([a]))
    fine_tol = [t / 10 for t in eq_tol]
    r_val, r_pt, _ = _scan(program, sub_axes, fine_tol, {"g": [0.0] * program.K, "w": fine_tol})
    if r_pt is not None and r_val < best_val:
        best_val, best_pt = r_val, r_pt

    lower = relaxed_val - lf * half
    return OracleResult(
        optimum=best_val,
        optimizer=best_pt,
        resolution=h,
        error_bar=max(best_val - lower, 0.0),
        lower=min(lower, best_val),
    )


# ------------------------------------------------------ deterministic duals


def _range_span(fn, box):
    lo, hi = fn.range_on(box)
    return hi - lo


def _program_dual(program: ConvexProgram):
    """Return ``D(mu, lam)`` and whether it is exact."""
    box = program.feasible_set
    fns = [program.f] + program.g + program.w
    exact = isinstance(box, Box) and all(isinstance(fn, DiagQuadratic) for fn in fns)
    k = program.K

    if exact:
        def dual(m):
            mu, lam = m[:k], m[k:]
            terms = [(1.0, program.f)]
            terms += [(float(u), gk) for u, gk in zip(mu, program.g)]
            terms += [(float(l), wi) for l, wi in zip(lam, program.w)]
            lag = weighted_sum(terms)
            x = lag.minimize_on(box)
            return lag(x) - float(mu @ program.c) - float(lam @ program.d)
        return dual, True

    if not isinstance(box, Box) or box.dim > 4:
        raise OracleError("multiplier estimation needs a box of dimension <= 4")
    # lower bound through a coarse grid and the Lipschitz correction
    h = max(_range_width(box) / 60.0, 1e-12)
    pts = np.concatenate(list(_grid_chunks(_axes(box, h))))
    fv = program.f.evaluate_many(pts)
    gv = np.array([gk.evaluate_many(pts) for gk in program.g]).reshape(k, -1)
    wv = np.array([wi.evaluate_many(pts) for wi in program.w]).reshape(program.M, -1)
    lf = program.f.lipschitz_on(box)
    lg = np.array([gk.lipschitz_on(box) for gk in program.g])
    lw = np.array([wi.lipschitz_on(box) for wi in program.w])

    def dual(m):
        mu, lam = m[:k], m[k:]
        vals = fv + mu @ (gv - program.c[:, None]) + lam @ (wv - program.d[:, None])
        slope = lf + float(mu @ lg) + float(np.abs(lam) @ lw)
        return float(np.min(vals)) - slope * 0.5 * h
    return dual, False


def _range_width(box):
    return float(np.max(box.upper - box.lower))


def _stochastic_dual(problem: StochasticProblem):
    probs = np.asarray(problem.events.probabilities)
    opts = problem.options
    c = problem.c

    def dual(mu):
        total = 0.0
        for p, ys in zip(probs, opts):
            if p == 0:
                continue
            total += p * float(np.min(ys[:, 0] + (ys[:, 1:] - c) @ mu))
        return total
    return dual


def _compass(dual, start, lower_bounds, step, min_step):
    x = np.array(start, dtype=float)
    fx = dual(x)
    dim = x.size
    while step > min_step:
        improved = False
        for i in range(dim):
            for sgn in (1.0, -1.0):
                y = x.copy()
                y[i] = max(y[i] + sgn * step, lower_bounds[i])
                fy = dual(y)
                if fy > fx:
                    x, fx, improved = y, fy, True
        if not improved:
            step *= 0.5
    return x, fx


def _maximize_dual(dual, n_ineq, n_eq, mu_max, seeds=()):
    dim = n_ineq + n_eq
    if dim == 0:
        return np.zeros(0), dual(np.zeros(0))
    per_axis = {1: 201, 2: 61, 3: 21, 4: 11, 5: 7, 6: 5}.get(dim, 3)
    axes = [np.linspace(0.0, mu_max, per_axis)] * n_ineq
    axes += [np.linspace(-mu_max, mu_max, 2 * per_axis - 1)] * n_eq
    best, best_val = None, -math.inf
    for point in itertools.product(*axes):
        m = np.array(point)
        val = dual(m)
        if val > best_val:
            best, best_val = m, val
    for s in seeds:
        s = np.asarray(s, dtype=float)
        val = dual(s)
        if val > best_val:
            best, best_val = s, val
    lower_bounds = [0.0] * n_ineq + [-math.inf] * n_eq
    step = mu_max / (per_axis - 1)
    return _compass(dual, best, lower_bounds, step, step * 1e-12)


def _default_mu_max(obj_range, slack_ranges):
    slack = max([s for s in slack_ranges if s > 0], default=0.0)
    if not (obj_range > 0 and slack > 0):
        return 10.0
    return 10.0 * obj_range / slack


def estimate_multiplier(obj, resolution: float | None = None, optimum: OracleResult | None = None):
    """Search ``mu >= 0`` maximizing the dual function; report its margin.

    For deterministic programs ``mu`` covers the inequality constraints and
    then the equality constraints (sign-free).  The margin is
    ``D(mu) - optimum``; weak duality makes it at most the oracle's error
    bar, and ``mu`` is a multiplier when it is at least ``-1e-6``.

    Returns
    -------
    mu : ndarray
    margin : float
    optimum : OracleResult
    """
    if isinstance(obj, StochasticProblem):
        if obj.K > 3:
            raise OracleError(f"multiplier search is limited to K <= 3, got K = {obj.K}")
        optimum = optimum or stochastic_optimum(obj, resolution)
        stacked = np.vstack(obj.options)
        slack = [obj.c[k] - float(stacked[:, k + 1].min()) for k in range(obj.K)]
        mu_max = _default_mu_max(float(np.ptp(stacked[:, 0])), slack)
        dual = _stochastic_dual(obj)
        seeds = [optimum.extra["dual_point"]] if "dual_point" in optimum.extra else []
        n_ineq, n_eq = obj.K, 0
    else:
        program = _as_program(obj)
        if program.K + program.M > 3:
            raise OracleError(
                f"multiplier search is limited to 3 constraints, got {program.K + program.M}"
            )
        optimum = optimum or static_optimum_grid(program, resolution)
        box = program.feasible_set
        slack = [ck - gk.range_on(box)[0] for gk, ck in zip(program.g, program.c)]
        slack += [_range_span(wi, box) for wi in program.w]
        mu_max = _default_mu_max(_range_span(program.f, box), slack)
        dual, _ = _program_dual(program)
        seeds = []
        n_ineq, n_eq = program.K, program.M

    for _ in range(4):
        mu, val = _maximize_dual(dual, n_ineq, n_eq, mu_max, seeds)
        at_edge = mu.size and np.max(np.abs(mu)) >= mu_max * (1 - 1e-9)
        if not at_edge:
            break
        mu_max *= 10.0
    mu = np.where(np.abs(mu) < 1e-15, 0.0, mu)
    return mu, float(val - optimum.optimum), optimum


def lagrange_gap(obj, mu, optimum: float, points) -> np.ndarray:
    """``y_0 + mu.(y - c) - optimum`` at points of the achievable set.

    ``points`` are decision vectors for programs, or rows ``(y_0, ..., y_K)``
    of expected values for stochastic problems.
    """
    mu = np.asarray(mu, dtype=float)
    if isinstance(obj, StochasticProblem):
        pts = np.asarray(points, dtype=float)
        return pts[:, 0] + (pts[:, 1:] - obj.c) @ mu - optimum
    program = _as_program(obj)
    pts = np.asarray(points, dtype=float)
    val = program.f.evaluate_many(pts) - optimum
    k = program.K
    for u, gk, ck in zip(mu[:k], program.g, program.c):
        val = val + u * (gk.evaluate_many(pts) - ck)
    for l, wi, di in zip(mu[k:], program.w, program.d):
        val = val + l * (wi.evaluate_many(pts) - di)
    return val


# ----------------------------------------------------- stochastic oracle


def _dedupe_rows(rows, scale):
    keys = np.round(rows / scale, 9)
    _, idx = np.unique(keys, axis=0, return_index=True)
    return np.sort(idx)


def _tie_planes(problem: StochasticProblem):
    planes = []
    for ys in problem.options:
        for a, b in itertools.combinations(range(len(ys)), 2):
            normal = ys[a, 1:] - ys[b, 1:]
            if np.allclose(normal, 0):
                continue
            planes.append(np.concatenate([normal, [ys[b, 0] - ys[a, 0]]]))
    k = problem.K
    for i in range(k):
        e = np.zeros(k + 1)
        e[i] = 1.0
        planes.append(e)
    planes = np.array(planes)
    norms = np.linalg.norm(planes[:, :k], axis=1)
    planes = planes / norms[:, None]
    # a plane and its negation are the same plane
    first = np.argmax(np.abs(planes[:, :k]) > 1e-12, axis=1)
    sign = np.sign(planes[np.arange(len(planes)), first])
    planes = planes * sign[:, None]
    return planes[_dedupe_rows(planes, 1.0)]


def _dual_vertices(problem: StochasticProblem, max_combos=2_000_000):
    k = problem.K
    planes = _tie_planes(problem)
    if math.comb(len(planes), k) > max_combos:
        raise OracleError("instance too large for exact dual enumeration")
    verts = []
    for combo in itertools.combinations(range(len(planes)), k):
        a = planes[list(combo), :k]
        rhs = planes[list(combo), k]
        if abs(np.linalg.det(a)) < 1e-12:
            continue
        mu = np.linalg.solve(a, rhs)
        if np.all(mu >= -1e-12):
            verts.append(np.maximum(mu, 0.0))
    if not verts:
        verts.append(np.zeros(k))
    return np.array(verts)


def _face_points(problem: StochasticProblem, mu, tol, cap=1 << 16):
    """Distinct expected vectors of pure policies that are Lagrangian-optimal at ``mu``."""
    probs = problem.events.probabilities
    scale = max(1.0, float(np.max(np.abs(np.vstack(problem.options)))))
    sums = np.zeros((1, problem.K + 1))
    choices = [()]
    for p, ys in zip(probs, problem.options):
        scores = ys[:, 0] + ys[:, 1:] @ mu
        best = np.flatnonzero(scores <= scores.min() + tol * scale)
        if p == 0:
            best = best[:1]
        new = (sums[:, None, :] + p * ys[best][None, :, :]).reshape(-1, problem.K + 1)
        new_choices = [ch + (int(a),) for ch in choices for a in best]
        keep = _dedupe_rows(new, scale)
        if keep.size > cap:
            raise OracleError("optimal face too large for exact primal recovery")
        sums = new[keep]
        choices = [new_choices[i] for i in keep]
    return sums, choices


def _mix_on_face(points, c, active, tol):
    """Convex weights over ``points`` meeting ``y_k = c_k`` (active) and ``y_k <= c_k``."""
    k = c.size
    inactive = [i for i in range(k) if i not in active]
    n = len(points)
    for t_size in range(len(inactive) + 1):
        for tight in itertools.combinations(inactive, t_size):
            rows = list(active) + list(tight)
            size = 1 + len(rows)
            if size > n:
                continue
            for subset in itertools.combinations(range(n), size):
                pts = points[list(subset)]
                a = np.vstack([np.ones(size), pts[:, [r + 1 for r in rows]].T])
                rhs = np.concatenate([[1.0], c[rows]])
                if abs(np.linalg.det(a)) < 1e-14:
                    continue
                lam = np.linalg.solve(a, rhs)
                if np.any(lam < -tol):
                    continue
                lam = np.maximum(lam, 0.0)
                lam /= lam.sum()
                y = lam @ pts
                if np.all(y[1:] <= c + tol):
                    return list(subset), lam
    return None


def _policy_table(problem, choices, subset, lam):
    table = [np.zeros(len(ys)) for ys in problem.options]
    for w, s in zip(lam, subset):
        for e, a in enumerate(choices[s]):
            table[e][a] += w
    return table


def policy_expectation(problem: StochasticProblem, table) -> np.ndarray:
    """``E[y]`` under per-event option probabilities ``table``."""
    total = np.zeros(problem.K + 1)
    for p, ys, q in zip(problem.events.probabilities, problem.options, table):
        total = total + p * (np.asarray(q) @ ys)
    return total


def _exact_stochastic(problem: StochasticProblem, tol=1e-9):
    dual = _stochastic_dual(problem)
    verts = _dual_vertices(problem)
    vals = np.array([dual(m) for m in verts])
    order = np.argsort(-vals, kind="stable")
    best_mu = verts[order[0]]
    best_val = float(vals[order[0]])
    # D keeps growing along some ray only when the problem is infeasible
    for k in range(problem.K):
        probe = best_mu.copy()
        probe[k] += 1e6
        if dual(probe) > best_val + 1e-6:
            raise OracleError("no feasible point found at this resolution")
    for i in order[: min(len(order), 8)]:
        if vals[i] < best_val - tol * max(1.0, abs(best_val)):
            break
        mu = verts[i]
        points, choices = _face_points(problem, mu, tol)
        active = [k for k in range(problem.K) if mu[k] > tol]
        found = _mix_on_face(points, problem.c, active, tol)
        if found is not None:
            subset, lam = found
            table = _policy_table(problem, choices, subset, lam)
            y = policy_expectation(problem, table)
            return table, float(y[0]), best_val, best_mu
    raise OracleError("no feasible point found at this resolution")


def _compositions(n_options, m):
    """All probability vectors over ``n_options`` with entries in ``{0, 1/m, ..., 1}``."""
    out = []
    for cut in itertools.combinations(range(m + n_options - 1), n_options - 1):
        prev = -1
        parts = []
        for c_ in cut:
            parts.append(c_ - prev - 1)
            prev = c_
        parts.append(m + n_options - 2 - prev)
        out.append(parts)
    return np.array(out, dtype=float) / m


def _grid_stochastic(problem: StochasticProblem, resolution, budget):
    m = max(1, int(round(1.0 / resolution)))
    per_event = []
    for p, ys in zip(problem.events.probabilities, problem.options):
        q = _compositions(len(ys), m)
        per_event.append((q, p * (q @ ys)))
    size = math.prod(len(q) for q, _ in per_event)
    if size > budget:
        raise OracleError(f"simplex grid has {size} points, above the budget of {budget}")
    # combine events one at a time, keeping track of the composition indices
    sums = np.zeros((1, problem.K + 1))
    index = np.zeros((1, 0), dtype=np.int64)
    for q, contrib in per_event:
        sums = (sums[:, None, :] + contrib[None, :, :]).reshape(-1, problem.K + 1)
        index = np.concatenate(
            [np.repeat(index, len(q), axis=0), np.tile(np.arange(len(q)), len(index))[:, None]], axis=1
        )
    feasible = np.all(sums[:, 1:] <= problem.c + 1e-12, axis=1)
    if not np.any(feasible):
        raise OracleError("no feasible point found at this resolution")
    vals = np.where(feasible, sums[:, 0], np.inf)
    i = int(np.argmin(vals))
    table = [per_event[e][0][index[i, e]] for e in range(len(per_event))]
    return table, float(vals[i])


def stochastic_optimum(
    problem: StochasticProblem,
    resolution: float | None = None,
    method: str = "auto",
    budget: int = 2_000_000,
) -> OracleResult:
    """Optimum over stationary randomized policies.

    Parameters
    ----------
    method : {"auto", "exact", "grid"}
        ``"grid"`` searches the product of per-event simplices at step
        ``resolution`` (default 1/50) and needs at most 12 options in
        total.  ``"exact"`` enumerates dual vertices and mixes pure
        policies on the optimal face.  ``"auto"`` is ``"exact"``.

    The lower bound always comes from the dual function at the best
    enumerated vertex, so ``error_bar`` is the duality gap of the witness.
    """
    if method not in ("auto", "exact", "grid"):
        raise ValidationError(f"unknown method {method!r}")
    if problem.K > 3:
        raise OracleError(f"stochastic oracle is limited to K <= 3, got K = {problem.K}")
    res = 1.0 / 50 if resolution is None else float(resolution)
    if method == "grid":
        total = sum(len(ys) for ys in problem.options)
        if total > 12:
            raise OracleError(f"simplex grid needs at most 12 options in total, got {total}")
        table, value = _grid_stochastic(problem, res, budget)
        dual = _stochastic_dual(problem)
        verts = _dual_vertices(problem)
        vals = [dual(m) for m in verts]
        i = int(np.argmax(vals))
        lower, mu = float(vals[i]), verts[i]
    else:
        table, value, lower, mu = _exact_stochastic(problem)
    return OracleResult(
        optimum=value,
        optimizer=table,
        resolution=res,
        error_bar=max(value - lower, 0.0),
        lower=min(lower, value),
        extra={"dual_point": mu},
    )


def optimum(obj, resolution: float | None = None) -> OracleResult:
    """Dispatch to the matching oracle and attach a multiplier estimate when possible."""
    if isinstance(obj, StochasticProblem):
        res = stochastic_optimum(obj, resolution)
        if obj.K <= 3:
            res.mu, res.margin, _ = estimate_multiplier(obj, resolution, res)
        return res
    program = _as_program(obj)
    res = static_optimum_grid(program, resolution)
    if program.K + program.M <= 3:
        try:
            res.mu, res.margin, _ = estimate_multiplier(program, resolution, res)
        except (OracleError, ValidationError):
            pass
    return res
