"""JSON problem files.

One document per file with a ``kind`` discriminator:

``stochastic``
    ``c`` and ``events: [{id, probability, options: [[y0, y1, ...], ...]}]``,
    or a ``downlink`` block (see :func:`_parse_downlink`).
``convex``
    ``box: {lower, upper}``, ``objective``, optional ``constraints:
    [{function, c}]`` and ``equalities: [{function, d}]``, optional
    ``inner: {max_iters, c0, tol, restart_every}``.
``lp``
    Dense ``b``, ``A``, ``c``, ``x_min``, ``x_max``.
``distributed``
    ``num_nodes``, ``links``, ``theta_box``, ``nodes: [{x_box, objective,
    constraint: {function, c}}]`` and an optional ``shared_constraint: {c}``
    that turns the node constraints into terms of one summed constraint.

Functions are ``{"a": [...], "b": 0}`` (affine) or ``{"q": [...], "a": [...],
"b": 0}`` (diagonal quadratic).  Every error names the offending field.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .convex import ConvexProgram, InnerSolverParams
from .distributed import GraphProblem, GraphTopology, NodeProgram, replicate_shared_constraint
from .errors import ValidationError
from .functions import Affine, Box, DiagQuadratic
from .lp import LinearProgram
from .stochastic import RandomEventModel, StochasticProblem, build_downlink_problem

KINDS = ("stochastic", "convex", "lp", "distributed")


class SchemaError(ValidationError):
    """Problem-file error; the message starts with the field path."""


@dataclass
class LoadedProblem:
    kind: str
    problem: object
    inner: InnerSolverParams | None = None
    source: str = ""


def _require(obj, key, where):
    if not isinstance(obj, dict):
        raise SchemaError(f"{where}: expected an object")
    if key not in obj:
        raise SchemaError(f"{where}.{key}: required field is missing" if where else f"{key}: required field is missing")
    return obj[key]


def _path(where, key):
    return f"{where}.{key}" if where else key


def _numbers(value, where, length=None):
    try:
        arr = np.asarray(value, dtype=float)
    except (TypeError, ValueError):
        raise SchemaError(f"{where}: expected numbers") from None
    if arr.ndim != 1:
        raise SchemaError(f"{where}: expected a flat list of numbers")
    if not np.all(np.isfinite(arr)):
        raise SchemaError(f"{where}: values must be finite")
    if length is not None and arr.size != length:
        raise SchemaError(f"{where}: expected {length} entries, got {arr.size}")
    return arr


def _number(value, where):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SchemaError(f"{where}: expected a number")
    if not np.isfinite(value):
        raise SchemaError(f"{where}: must be finite")
    return float(value)


def _wrap(where, fn, *args):
    try:
        return fn(*args)
    except SchemaError:
        raise
    except ValidationError as exc:
        raise SchemaError(f"{where}: {exc}") from None


def parse_function(raw, dim: int, where: str):
    if not isinstance(raw, dict):
        raise SchemaError(f"{where}: expected an object with 'a' (and optionally 'q', 'b')")
    unknown = set(raw) - {"q", "a", "b"}
    if unknown:
        raise SchemaError(f"{where}: unknown keys {sorted(unknown)}; functions are affine or diagonal quadratic")
    a = _numbers(_require(raw, "a", where), _path(where, "a"), dim)
    b = _number(raw.get("b", 0.0), _path(where, "b"))
    if "q" in raw:
        q = _numbers(raw["q"], _path(where, "q"), dim)
        if np.any(q < 0):
            raise SchemaError(f"{_path(where, 'q')}: entries must be nonnegative for convexity")
        return DiagQuadratic(q, a, b)
    return Affine(a, b)


def parse_box(raw, where, dim=None) -> Box:
    lower = _numbers(_require(raw, "lower", where), _path(where, "lower"), dim)
    upper = _numbers(_require(raw, "upper", where), _path(where, "upper"), lower.size)
    return _wrap(where, Box, lower, upper)


def _parse_inner(raw):
    if raw is None:
        return None
    if not isinstance(raw, dict):
        raise SchemaError("inner: expected an object")
    unknown = set(raw) - {"max_iters", "c0", "tol", "restart_every"}
    if unknown:
        raise SchemaError(f"inner: unknown keys {sorted(unknown)}")
    return _wrap("inner", lambda: InnerSolverParams(**raw))


def _parse_stochastic(doc):
    if "downlink" in doc:
        return _parse_downlink(doc["downlink"])
    c = _numbers(_require(doc, "c", ""), "c")
    events = _require(doc, "events", "")
    if not isinstance(events, list) or not events:
        raise SchemaError("events: expected a nonempty list")
    ids, probs, options = [], [], []
    for i, ev in enumerate(events):
        where = f"events[{i}]"
        ids.append(str(ev.get("id", i)) if isinstance(ev, dict) else i)
        probs.append(_number(_require(ev, "probability", where), f"{where}.probability"))
        opts = _require(ev, "options", where)
        if not isinstance(opts, list) or not opts:
            raise SchemaError(f"{where}.options: every event needs at least one option")
        rows = [_numbers(o, f"{where}.options[{j}]", c.size + 1) for j, o in enumerate(opts)]
        options.append(np.array(rows))
    if any(p < 0 for p in probs):
        raise SchemaError("events[*].probability: event model probabilities must be nonnegative")
    total = float(np.sum(probs))
    if abs(total - 1.0) > 1e-12:
        raise SchemaError(f"events[*].probability: event model probabilities must sum to 1, got {total!r}")
    model = _wrap("events", RandomEventModel, ids, probs)
    return _wrap("", StochasticProblem, c, model, options)


def _parse_downlink(raw):
    """``num_users``, ``arrivals`` (per user ``[[value, prob], ...]``),
    ``channels`` (``[{state, probability}]``), ``power_levels`` and either a
    ``rates`` table ``[{power, state, rates}]`` or ``rate_model: "linear"``
    (rate of user k is ``state_k * power_k``).
    """
    where = "downlink"
    k = _require(raw, "num_users", where)
    if isinstance(k, bool) or not isinstance(k, int) or k < 1:
        raise SchemaError("downlink.num_users: expected a positive integer")
    arrivals = _require(raw, "arrivals", where)
    if not isinstance(arrivals, list) or len(arrivals) != k:
        raise SchemaError(f"downlink.arrivals: expected one distribution per user ({k})")
    arr = []
    for u, dist in enumerate(arrivals):
        if not isinstance(dist, list) or not dist:
            raise SchemaError(f"downlink.arrivals[{u}]: arrival alphabet is empty")
        arr.append([tuple(_numbers(pair, f"downlink.arrivals[{u}][{j}]", 2)) for j, pair in enumerate(dist)])
    chans = _require(raw, "channels", where)
    if not isinstance(chans, list) or not chans:
        raise SchemaError("downlink.channels: channel alphabet is empty")
    channels = []
    for j, ch in enumerate(chans):
        w = f"downlink.channels[{j}]"
        state = tuple(_numbers(_require(ch, "state", w), f"{w}.state", k))
        channels.append((state, _number(_require(ch, "probability", w), f"{w}.probability")))
    levels = _require(raw, "power_levels", where)
    if not isinstance(levels, list) or not levels:
        raise SchemaError("downlink.power_levels: power alphabet is empty")
    levels = [float(x) for x in _numbers(levels, "downlink.power_levels")]
    if "rates" in raw:
        table = {}
        for j, row in enumerate(raw["rates"]):
            w = f"downlink.rates[{j}]"
            p = tuple(_numbers(_require(row, "power", w), f"{w}.power", k))
            s = tuple(_numbers(_require(row, "state", w), f"{w}.state", k))
            table[(p, s)] = tuple(_numbers(_require(row, "rates", w), f"{w}.rates", k))
        rates = table
    elif raw.get("rate_model") == "linear":
        def rates(p, s):
            return tuple(si * pi for si, pi in zip(s, p))
    else:
        raise SchemaError("downlink.rates: give a rate table or rate_model: \"linear\"")
    return _wrap(where, build_downlink_problem, k, arr, channels, levels, rates)


def _parse_convex(doc):
    box = parse_box(_require(doc, "box", ""), "box")
    n = box.dim
    f = parse_function(_require(doc, "objective", ""), n, "objective")
    g, c, w, d = [], [], [], []
    for i, con in enumerate(doc.get("constraints", [])):
        where = f"constraints[{i}]"
        g.append(parse_function(_require(con, "function", where), n, f"{where}.function"))
        c.append(_number(_require(con, "c", where), f"{where}.c"))
    for i, eq in enumerate(doc.get("equalities", [])):
        where = f"equalities[{i}]"
        fn = parse_function(_require(eq, "function", where), n, f"{where}.function")
        if not fn.is_affine:
            raise SchemaError(f"{where}.function: equality functions must be affine")
        w.append(fn)
        d.append(_number(_require(eq, "d", where), f"{where}.d"))
    return _wrap("", ConvexProgram, f, box, g, c, w, d)


def _parse_lp(doc):
    b = _numbers(_require(doc, "b", ""), "b")
    a_raw = _require(doc, "A", "")
    try:
        a = np.asarray(a_raw, dtype=float)
    except (TypeError, ValueError):
        raise SchemaError("A: expected a matrix of numbers") from None
    if a.size == 0:
        a = a.reshape(0, b.size)
    if a.ndim != 2 or a.shape[1] != b.size:
        raise SchemaError(f"A: expected shape (K, {b.size}), got {a.shape}")
    c = _numbers(_require(doc, "c", ""), "c", a.shape[0])
    x_min = _numbers(_require(doc, "x_min", ""), "x_min", b.size)
    x_max = _numbers(_require(doc, "x_max", ""), "x_max", b.size)
    bad = np.nonzero(~(x_min < x_max))[0]
    if bad.size:
        i = int(bad[0])
        raise SchemaError(f"x_min/x_max: need x_min < x_max componentwise; violated at index {i}")
    return _wrap("", LinearProgram, b, a, c, x_min, x_max)


def _parse_distributed(doc):
    n = _require(doc, "num_nodes", "")
    if isinstance(n, bool) or not isinstance(n, int) or n < 1:
        raise SchemaError("num_nodes: expected a positive integer")
    links = doc.get("links", [])
    if not isinstance(links, list) or any(not isinstance(lk, list) or len(lk) != 2 for lk in links):
        raise SchemaError("links: expected a list of [n, j] pairs")
    topo = _wrap("links", GraphTopology, n, [tuple(lk) for lk in links])
    theta_box = parse_box(_require(doc, "theta_box", ""), "theta_box")
    nodes = _require(doc, "nodes", "")
    if not isinstance(nodes, list) or len(nodes) != n:
        raise SchemaError(f"nodes: expected {n} node entries")
    programs = []
    for i, node in enumerate(nodes):
        where = f"nodes[{i}]"
        x_box = parse_box(node["x_box"], f"{where}.x_box") if "x_box" in node else None
        dim = (0 if x_box is None else x_box.dim) + theta_box.dim
        f = parse_function(_require(node, "objective", where), dim, f"{where}.objective")
        g, c = None, 0.0
        if "constraint" in node:
            con = node["constraint"]
            g = parse_function(_require(con, "function", f"{where}.constraint"), dim, f"{where}.constraint.function")
            c = _number(con.get("c", 0.0), f"{where}.constraint.c")
        programs.append(NodeProgram(f=f, x_box=x_box, g=g, c=c))
    if "shared_constraint" in doc:
        c = _number(_require(doc["shared_constraint"], "c", "shared_constraint"), "shared_constraint.c")
        return _wrap("shared_constraint", replicate_shared_constraint, topo, programs, theta_box, c)
    return _wrap("nodes", GraphProblem, topo, programs, theta_box)


_PARSERS = {
    "stochastic": _parse_stochastic,
    "convex": _parse_convex,
    "lp": _parse_lp,
    "distributed": _parse_distributed,
}


def parse_problem(doc, source="") -> LoadedProblem:
    if not isinstance(doc, dict):
        raise SchemaError("document: expected a JSON object")
    kind = doc.get("kind")
    if kind not in KINDS:
        raise SchemaError(f"kind: unknown problem kind {kind!r}; expected one of {', '.join(KINDS)}")
    problem = _PARSERS[kind](doc)
    return LoadedProblem(kind, problem, _parse_inner(doc.get("inner")), source)


def parse_problem_file(path) -> LoadedProblem:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise SchemaError(f"{path}: cannot read problem file ({exc.strerror})") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    try:
        return parse_problem(doc, str(path))
    except SchemaError as exc:
        raise SchemaError(f"{path}: {exc}") from None
