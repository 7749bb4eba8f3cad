"""Decentralized drift-plus-penalty over a directed graph.

Every node ``n`` keeps its own decision ``x^(n)``, a local copy ``theta^(n)``
of the shared variables, one inequality queue ``Q^(n)`` for its local
constraint and a signed queue ``Z^(n,j)_i`` per outgoing link ``(n, j)``
and shared component ``i``.  The ``Z`` queues drive ``theta^(n) - theta^(j)``
to zero on time average, which over a connected graph means every node's
average ``theta`` agrees.

Rounds are synchronous.  Each round:

1. every node sends ``Z^(a,n)`` along each link ``(a, n)`` to ``n``;
2. every node minimizes
   ``V f + Q g + sum_i theta_i [sum_out Z^(n,j)_i - sum_in Z^(a,n)_i]``
   over its local box using only its own state and the received values;
3. every node ``j`` sends ``theta^(j)`` to ``n`` along each link ``(n, j)``;
4. queues update.

Messages go through a ``transport`` callable so tests can drop or inspect
them; a missing message aborts the round.
"""

from __future__ import annotations

import itertools
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import networkx as nx
import numpy as np

from .convex import ConvexProgram, InnerResult, InnerSolverParams, _objective, solve_inner
from .errors import NumericalError, ProtocolError, ValidationError
from .functions import Affine, Box, ConvexFunction, embed, product_box, weighted_sum
from .queues import update_equality, update_inequality
from .trace import Trace, fmt


class GraphTopology:
    """Directed graph on nodes ``0..N-1`` whose undirected version is connected."""

    def __init__(self, num_nodes: int, links: Sequence[tuple[int, int]]):
        if num_nodes < 1:
            raise ValidationError("graph needs at least one node")
        self.num_nodes = int(num_nodes)
        seen = set()
        clean = []
        for link in links:
            if len(link) != 2:
                raise ValidationError(f"link {link!r} must be a pair (n, j)")
            n, j = int(link[0]), int(link[1])
            if not (0 <= n < num_nodes and 0 <= j < num_nodes):
                raise ValidationError(f"link ({n}, {j}) refers to a node outside 0..{num_nodes - 1}")
            if n == j:
                raise ValidationError(f"self-loop ({n}, {n}) is not allowed")
            if (n, j) in seen:
                raise ValidationError(f"duplicate link ({n}, {j})")
            seen.add((n, j))
            clean.append((n, j))
        self.links = clean
        g = nx.Graph()
        g.add_nodes_from(range(self.num_nodes))
        g.add_edges_from(clean)
        if not nx.is_connected(g):
            parts = [sorted(c) for c in nx.connected_components(g)]
            raise ValidationError(
                f"graph must be connected when link directions are ignored; components {parts}"
            )

    def out_links(self, n: int) -> list[tuple[int, int]]:
        return [lk for lk in self.links if lk[0] == n]

    def in_links(self, n: int) -> list[tuple[int, int]]:
        return [lk for lk in self.links if lk[1] == n]

    def __repr__(self):
        return f"GraphTopology({self.num_nodes}, {self.links})"


@dataclass
class NodeProgram:
    """Local data of one node.

    ``f`` and ``g`` act on the concatenation ``(x, theta)``.  ``x_box`` may
    be ``None`` for a node that only holds shared variables; ``g`` may be
    ``None`` for a node without a local constraint.
    """

    f: ConvexFunction
    x_box: Box | None = None
    g: ConvexFunction | None = None
    c: float = 0.0

    @property
    def nx(self) -> int:
        return 0 if self.x_box is None else self.x_box.dim


@dataclass
class GraphProblem:
    topology: GraphTopology
    programs: list
    theta_box: Box

    def __post_init__(self):
        self.programs = list(self.programs)
        if len(self.programs) != self.topology.num_nodes:
            raise ValidationError(
                f"{len(self.programs)} node programs for {self.topology.num_nodes} nodes"
            )
        for n, p in enumerate(self.programs):
            dim = p.nx + self.G
            if p.f.dim != dim:
                raise ValidationError(f"node {n}: objective has dimension {p.f.dim}, expected {dim}")
            if p.g is not None and p.g.dim != dim:
                raise ValidationError(f"node {n}: constraint has dimension {p.g.dim}, expected {dim}")
            if not math.isfinite(p.c):
                raise ValidationError(f"node {n}: constraint constant must be finite")

    @property
    def G(self) -> int:
        return self.theta_box.dim

    @property
    def num_nodes(self) -> int:
        return self.topology.num_nodes

    def local_box(self, n: int) -> Box:
        p = self.programs[n]
        if p.x_box is None:
            return self.theta_box
        return product_box([p.x_box, self.theta_box])

    def local_program(self, n: int) -> ConvexProgram:
        """Node ``n``'s per-slot program; the ``theta`` coupling enters as equality terms.

        The equality functions are the coordinate selectors ``theta_i``;
        their weights are the link-queue sums, not a queue of their own.
        A node without links gets none, so it runs exactly like the
        centralized solver.
        """
        p = self.programs[n]
        dim = p.nx + self.G
        has_links = bool(self.topology.out_links(n) or self.topology.in_links(n))
        selectors = []
        if has_links:
            for i in range(self.G):
                a = np.zeros(dim)
                a[p.nx + i] = 1.0
                selectors.append(Affine(a))
        return ConvexProgram(
            f=p.f,
            feasible_set=self.local_box(n),
            g=[] if p.g is None else [p.g],
            c=[] if p.g is None else [p.c],
            w=selectors,
            d=np.zeros(len(selectors)),
        )


@dataclass
class NodeState:
    """What node ``n`` owns: its point, ``Q^(n)``, and ``Z^(n,j)`` per out-link."""

    node: int
    point: np.ndarray  # (x, theta)
    q: np.ndarray  # length 0 or 1
    z: dict  # (n, j) -> ndarray of length G
    out_links: list
    in_links: list


@dataclass(frozen=True)
class RoundMessage:
    sender: int
    receiver: int
    round: int
    kind: str  # "z" or "theta"
    payload: tuple


def _weights(state: NodeState, incoming_z: dict, g: int) -> np.ndarray:
    s = np.zeros(g)
    for link in state.out_links:
        s = s + state.z[link]
    for link in state.in_links:
        s = s - incoming_z[link]
    return s


def node_local_decision(
    state: NodeState,
    program: ConvexProgram,
    incoming_z: dict,
    v: float,
    inner: InnerSolverParams,
) -> InnerResult:
    """Minimize the node's drift-plus-penalty expression over its local box.

    ``incoming_z`` maps each in-link ``(a, n)`` to ``Z^(a,n)`` as received
    this round; the node's own out-link queues come from ``state``.  Nothing
    else is read.
    """
    for link in state.in_links:
        if link not in incoming_z:
            raise ProtocolError(f"node {state.node} has no Z value for link {link}")
    if program.M:
        s = _weights(state, incoming_z, program.M)
    else:
        s = np.zeros(0)
    obj = _objective(program, state.q, s, v)
    try:
        return solve_inner(obj, program.feasible_set, inner)
    except NumericalError as exc:
        exc.node = state.node
        raise


def _deliver(messages, transport):
    delivered = messages if transport is None else transport(list(messages))
    return {(m.sender, m.receiver, m.kind): m for m in delivered}


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("DPP_THREADS", "1")))
    except ValueError:
        return 1


@dataclass
class DistributedResult:
    """Per-node traces of a distributed run.

    ``traces[n].x`` holds the concatenated ``(x^(n), theta^(n))`` per slot,
    ``traces[n].y`` holds ``(f^(n), g^(n))`` values and
    ``traces[n].zqueues`` the ``Z^(n,j)`` queues of node ``n``'s out-links,
    ``G`` columns per link in ``topology.out_links(n)`` order.
    """

    problem: GraphProblem
    traces: list

    def __len__(self):
        return len(self.traces[0])

    def point_bar(self, n: int, t: int) -> np.ndarray:
        return self.traces[n].x_average(t)

    def theta_bar(self, n: int, t: int) -> np.ndarray:
        return self.point_bar(n, t)[self.problem.programs[n].nx:]

    def x_bar(self, n: int, t: int) -> np.ndarray:
        return self.point_bar(n, t)[: self.problem.programs[n].nx]

    def z(self, n: int, j: int, t: int) -> np.ndarray:
        links = self.problem.topology.out_links(n)
        idx = links.index((n, j))
        g = self.problem.G
        return self.traces[n].zqueues[t, idx * g:(idx + 1) * g]

    def consensus_gap(self, t: int) -> float:
        thetas = [self.theta_bar(n, t) for n in range(self.problem.num_nodes)]
        gap = 0.0
        for a, b in itertools.combinations(thetas, 2):
            gap = max(gap, float(np.linalg.norm(a - b)))
        return gap

    def sum_objective(self, t: int) -> float:
        return math.fsum(p.f(self.point_bar(n, t)) for n, p in enumerate(self.problem.programs))

    def max_constraint_violation(self, t: int) -> float:
        worst = 0.0
        for n, p in enumerate(self.problem.programs):
            if p.g is not None:
                worst = max(worst, p.g(self.point_bar(n, t)) - p.c)
        return worst

    def summary_rows(self):
        for t in range(1, len(self) + 1):
            yield t, self.consensus_gap(t), self.sum_objective(t), self.max_constraint_violation(t)

    def write_summary_csv(self, path) -> None:
        """Columns ``t,max_pairwise_theta_gap,sum_objective,max_constraint_violation``."""
        lines = ["t,max_pairwise_theta_gap,sum_objective,max_constraint_violation"]
        for t, gap, obj, viol in self.summary_rows():
            lines.append(",".join([str(t), fmt(gap), fmt(obj), fmt(viol)]))
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    def write_node_csvs(self, directory) -> list[Path]:
        paths = []
        for n, tr in enumerate(self.traces):
            p = Path(directory) / f"node_{n}.csv"
            tr.write_csv(p)
            paths.append(p)
        return paths


def run_distributed(
    problem: GraphProblem,
    v: float,
    t_max: int,
    inner: InnerSolverParams | None = None,
    transport: Callable[[list], list] | None = None,
) -> DistributedResult:
    """Run ``t_max`` synchronous rounds from all-zero queues."""
    if not v > 0:
        raise ValidationError(f"v must be positive, got {v!r}")
    if t_max < 1:
        raise ValidationError(f"t_max must be positive, got {t_max!r}")
    inner = inner or InnerSolverParams()
    topo = problem.topology
    nn, g = problem.num_nodes, problem.G
    programs = [problem.local_program(n) for n in range(nn)]
    states = []
    for n in range(nn):
        out = topo.out_links(n)
        states.append(
            NodeState(
                node=n,
                point=programs[n].feasible_set.center(),
                q=np.zeros(programs[n].K),
                z={lk: np.zeros(g) for lk in out},
                out_links=out,
                in_links=topo.in_links(n),
            )
        )

    dims = [programs[n].N for n in range(nn)]
    ms = [len(states[n].out_links) * g for n in range(nn)]
    rec_x = [np.empty((t_max, dims[n])) for n in range(nn)]
    rec_xbar = [np.empty((t_max, dims[n])) for n in range(nn)]
    rec_y = [np.empty((t_max, programs[n].K + 1)) for n in range(nn)]
    rec_w = [np.empty((t_max, ms[n])) for n in range(nn)]
    rec_q = [np.zeros((t_max + 1, programs[n].K)) for n in range(nn)]
    rec_z = [np.zeros((t_max + 1, ms[n])) for n in range(nn)]
    rec_gap = [np.empty(t_max) for _ in range(nn)]
    avgs = [np.zeros(dims[n]) for n in range(nn)]

    workers = min(_threads(), nn)
    pool = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        for tau in range(t_max):
            # Z values along each link to its head
            z_msgs = [
                RoundMessage(a, b, tau, "z", tuple(states[a].z[(a, b)].tolist()))
                for (a, b) in topo.links
            ]
            inbox = _deliver(z_msgs, transport)
            incoming = []
            for n in range(nn):
                got = {}
                for (a, b) in states[n].in_links:
                    msg = inbox.get((a, b, "z"))
                    if msg is None or msg.round != tau:
                        raise ProtocolError(f"missing Z message on link ({a}, {b}) in round {tau}")
                    got[(a, b)] = np.array(msg.payload)
                incoming.append(got)

            def decide(n):
                try:
                    return node_local_decision(states[n], programs[n], incoming[n], v, inner)
                except NumericalError as exc:
                    exc.slot = tau
                    raise

            results = list(pool.map(decide, range(nn))) if pool else [decide(n) for n in range(nn)]
            for n, res in enumerate(results):
                states[n].point = res.x

            # theta values from each link's head back to its tail
            th_msgs = [
                RoundMessage(b, a, tau, "theta", tuple(states[b].point[programs[b].N - g:].tolist()))
                for (a, b) in topo.links
            ]
            inbox = _deliver(th_msgs, transport)

            for n in range(nn):
                st, prog = states[n], programs[n]
                x = st.point
                theta = x[prog.N - g:]
                rec_y[n][tau, 0] = prog.f(x)
                if prog.K:
                    gv = prog.g[0](x)
                    rec_y[n][tau, 1] = gv
                    st.q[0] = update_inequality(st.q[0], gv, prog.c[0])
                for li, (a, b) in enumerate(st.out_links):
                    msg = inbox.get((b, a, "theta"))
                    if msg is None or msg.round != tau:
                        raise ProtocolError(f"missing theta message on link ({a}, {b}) in round {tau}")
                    other = msg.payload
                    zl = st.z[(a, b)]
                    for i in range(g):
                        diff = theta[i] - other[i]
                        rec_w[n][tau, li * g + i] = diff
                        zl[i] = update_equality(zl[i], diff, 0.0)
                avgs[n] = avgs[n] * (tau / (tau + 1)) + x / (tau + 1)
                rec_x[n][tau] = x
                rec_xbar[n][tau] = avgs[n]
                rec_q[n][tau + 1] = st.q
                if ms[n]:
                    rec_z[n][tau + 1] = np.concatenate([st.z[lk] for lk in st.out_links])
                rec_gap[n][tau] = results[n].gap
    finally:
        if pool:
            pool.shutdown()

    traces = [
        Trace(
            v=float(v),
            c=programs[n].c.copy(),
            d=np.zeros(ms[n]),
            y=rec_y[n],
            w=rec_w[n],
            queues=rec_q[n],
            zqueues=rec_z[n],
            x=rec_x[n],
            xbar=rec_xbar[n],
            inner_gap=rec_gap[n],
        )
        for n in range(nn)
    ]
    return DistributedResult(problem, traces)


def replicate_shared_constraint(
    topology: GraphTopology,
    programs: Sequence[NodeProgram],
    theta_box: Box,
    c: float,
) -> GraphProblem:
    """Turn ``sum_n g^(n)(x^(n), theta) <= c`` into a problem with only local constraints.

    Each node's ``g`` is read as its term in the shared sum.  In the result
    every node holds a replica of every ``x^(n)`` as part of its shared
    vector ``(x^(0), ..., x^(N-1), theta)``, node 0 enforces the summed
    constraint on its own replicas, and the link queues force all replicas
    to agree.
    """
    progs = list(programs)
    if len(progs) != topology.num_nodes:
        raise ValidationError(f"{len(progs)} node programs for {topology.num_nodes} nodes")
    g_dim = theta_box.dim
    offsets = np.cumsum([0] + [p.nx for p in progs])
    total_x = int(offsets[-1])
    dim = total_x + g_dim
    boxes = [p.x_box for p in progs if p.x_box is not None] + [theta_box]
    new_theta = product_box(boxes)
    theta_idx = list(range(total_x, dim))
    terms = []
    new_programs = []
    for n, p in enumerate(progs):
        idx = list(range(offsets[n], offsets[n + 1])) + theta_idx
        if p.f.dim != len(idx):
            raise ValidationError(f"node {n}: objective has dimension {p.f.dim}, expected {len(idx)}")
        if p.g is None:
            raise ValidationError(f"node {n}: needs its term g of the shared constraint")
        terms.append((1.0, embed(p.g, idx, dim)))
        new_programs.append(NodeProgram(f=embed(p.f, idx, dim)))
    new_programs[0].g = weighted_sum(terms)
    new_programs[0].c = float(c)
    return GraphProblem(topology, new_programs, new_theta)


def centralized_program(problem: GraphProblem) -> tuple[ConvexProgram, list]:
    """The single-agent equivalent over ``(x^(0), ..., x^(N-1), theta)``.

    Returns the program and, per node, the indices of its ``(x, theta)``
    inside the joint vector.
    """
    progs = problem.programs
    offsets = np.cumsum([0] + [p.nx for p in progs])
    total_x = int(offsets[-1])
    dim = total_x + problem.G
    theta_idx = list(range(total_x, dim))
    index = []
    fs, gs, cs = [], [], []
    for n, p in enumerate(progs):
        idx = list(range(offsets[n], offsets[n + 1])) + theta_idx
        index.append(idx)
        fs.append((1.0, embed(p.f, idx, dim)))
        if p.g is not None:
            gs.append(embed(p.g, idx, dim))
            cs.append(p.c)
    boxes = [p.x_box for p in progs if p.x_box is not None] + [problem.theta_box]
    return ConvexProgram(f=weighted_sum(fs), feasible_set=product_box(boxes), g=gs, c=cs), index
