"""Drift-plus-penalty for i.i.d. random events with finite option sets.

Every slot the engine observes an event ``omega``, picks the option ``y``
in ``Y(omega)`` minimizing ``V y_0 + sum_k Q_k y_k`` (ties to the lowest
index), and feeds ``y_k`` into the virtual queue for constraint ``k``.
The engine never reads the event probabilities; only the sampler and the
oracle do.
"""

from __future__ import annotations

import bisect
import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import ValidationError
from .queues import QueueState, update_inequality
from .trace import Trace

_MASK64 = (1 << 64) - 1


class SplitMix64:
    """Vigna's SplitMix64 generator (64-bit state, Weyl increment).

    Implemented with Python integers so a seed produces the same stream on
    every platform.  ``random()`` takes the top 53 bits.
    """

    def __init__(self, seed: int):
        self.state = int(seed) & _MASK64

    def next_u64(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & _MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def random(self) -> float:
        return (self.next_u64() >> 11) * (1.0 / 9007199254740992.0)


class RandomEventModel:
    """Finite i.i.d. event distribution sampled by inverse CDF."""

    def __init__(self, events: Sequence, probabilities: Sequence[float]):
        if len(events) == 0:
            raise ValidationError("event model needs at least one event")
        if len(events) != len(probabilities):
            raise ValidationError(
                f"event model has {len(events)} events but {len(probabilities)} probabilities"
            )
        probs = [float(p) for p in probabilities]
        if any(not math.isfinite(p) or p < 0 for p in probs):
            raise ValidationError("event model probabilities must be finite and nonnegative")
        total = math.fsum(probs)
        if abs(total - 1.0) > 1e-12:
            raise ValidationError(f"event model probabilities must sum to 1, got {total!r}")
        self.events = list(events)
        self.probabilities = probs
        self._cdf = list(itertools.accumulate(probs))
        self._last = max(i for i, p in enumerate(probs) if p > 0)

    def __len__(self):
        return len(self.events)

    def draw(self, rng: SplitMix64) -> int:
        """Index of the next event."""
        i = bisect.bisect_right(self._cdf, rng.random())
        # u can exceed a cdf total that rounded below 1
        return min(i, self._last)


@dataclass
class StochasticProblem:
    """Minimize ``avg y_0`` subject to ``avg y_k <= c_k`` with ``y in Y(omega)``.

    ``options[e]`` is an ``(n_e, K + 1)`` array of option vectors for event
    ``e``.  ``h`` holds the moment bounds ``max |y_0|`` and ``max y_k^2``,
    finite by construction.
    """

    c: np.ndarray
    events: RandomEventModel
    options: list
    h: np.ndarray = field(init=False)

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float).reshape(-1)
        if self.c.size < 1:
            raise ValidationError("stochastic problem needs at least one constraint (K >= 1)")
        if not np.all(np.isfinite(self.c)):
            raise ValidationError("constraint constants c must be finite")
        if len(self.options) != len(self.events):
            raise ValidationError(
                f"{len(self.events)} events but option sets for {len(self.options)}"
            )
        width = self.c.size + 1
        opts = []
        for e, ys in enumerate(self.options):
            arr = np.asarray(ys, dtype=float)
            if arr.ndim != 2 or arr.shape[0] < 1:
                raise ValidationError(f"event {self.events.events[e]!r} needs at least one option")
            if arr.shape[1] != width:
                raise ValidationError(
                    f"options for event {self.events.events[e]!r} have length {arr.shape[1]}, "
                    f"expected K + 1 = {width}"
                )
            if not np.all(np.isfinite(arr)):
                raise ValidationError(f"options for event {self.events.events[e]!r} must be finite")
            opts.append(arr)
        self.options = opts
        stacked = np.vstack(opts)
        self.h = np.concatenate([[np.max(np.abs(stacked[:, 0]))], np.max(stacked[:, 1:] ** 2, axis=0)])

    @property
    def K(self) -> int:
        return self.c.size


def _scores(options: np.ndarray, q: Sequence[float], v: float) -> np.ndarray:
    # fixed left-to-right accumulation so results match a scalar re-scan bit for bit
    s = v * options[:, 0]
    for k in range(options.shape[1] - 1):
        s = s + q[k] * options[:, k + 1]
    return s


def per_slot_decision(options, queues, v: float) -> int:
    """Index of the option minimizing ``v y_0 + sum_k Q_k y_k`` (lowest index on ties)."""
    opts = np.asarray(options, dtype=float)
    q = queues.ineq if isinstance(queues, QueueState) else np.asarray(queues, dtype=float).reshape(-1)
    if opts.ndim != 2 or opts.shape[0] == 0:
        raise ValidationError("options must be a nonempty 2-D array")
    if opts.shape[1] != q.size + 1:
        raise ValidationError(
            f"option length {opts.shape[1]} does not match K + 1 = {q.size + 1}"
        )
    if not v > 0:
        raise ValidationError(f"v must be positive, got {v!r}")
    return int(np.argmin(_scores(opts, q, v)))


def run(problem: StochasticProblem, v: float, t_max: int, seed: int) -> Trace:
    """Execute ``t_max`` slots from all-zero queues and return the trace."""
    if not v > 0:
        raise ValidationError(f"v must be positive, got {v!r}")
    if t_max < 1:
        raise ValidationError(f"t_max must be positive, got {t_max!r}")
    k = problem.K
    rng = SplitMix64(seed)
    c = [float(ci) for ci in problem.c]
    q = [0.0] * k
    ys = np.empty((t_max, k + 1))
    queues = np.zeros((t_max + 1, k))
    events = np.empty(t_max, dtype=np.int64)
    chosen = np.empty(t_max, dtype=np.int64)
    draw = problem.events.draw
    for tau in range(t_max):
        e = draw(rng)
        opts = problem.options[e]
        a = int(np.argmin(_scores(opts, q, v)))
        y = opts[a]
        events[tau] = e
        chosen[tau] = a
        ys[tau] = y
        for i in range(k):
            q[i] = update_inequality(q[i], float(y[i + 1]), c[i])
        queues[tau + 1] = q
    return Trace(
        v=float(v),
        c=problem.c.copy(),
        y=ys,
        queues=queues,
        events=events,
        event_ids=[str(e) for e in problem.events.events],
        options=chosen,
    )


def compute_B(problem: StochasticProblem) -> float:
    """``max over (event, option) of 0.5 * sum_k (y_k - c_k)^2``."""
    worst = 0.0
    for opts in problem.options:
        dev = opts[:, 1:] - problem.c
        worst = max(worst, float(np.max(0.5 * np.sum(dev * dev, axis=1))))
    return worst


def _distribution(pairs, what):
    pairs = [(v, float(p)) for v, p in pairs]
    if not pairs:
        raise ValidationError(f"{what} alphabet is empty")
    total = math.fsum(p for _, p in pairs)
    if any(p < 0 for _, p in pairs) or abs(total - 1.0) > 1e-12:
        raise ValidationError(f"{what} probabilities must be nonnegative and sum to 1, got {total!r}")
    return pairs


def _label(values) -> str:
    # integral values print without a decimal point, whatever their type
    parts = []
    for v in values:
        v = float(v)
        parts.append(str(int(v)) if v.is_integer() else repr(v))
    return "(" + ", ".join(parts) + (",)" if len(parts) == 1 else ")")


def build_downlink_problem(
    num_users: int,
    arrivals: Sequence[Sequence[tuple[float, float]]],
    channels: Sequence[tuple[Sequence, float]],
    power_levels: Sequence,
    rates: Mapping | Callable,
) -> StochasticProblem:
    """Multi-user downlink: minimize average total power subject to rate >= arrivals.

    Parameters
    ----------
    num_users : int
        Number of users K.
    arrivals : sequence of length K
        Per-user arrival distribution as ``(value, probability)`` pairs;
        users are independent.
    channels : sequence of ``(state, probability)``
        Joint channel-state distribution; ``state`` has one entry per user.
    power_levels : sequence
        Allowed per-user power values, shared by every user, or one
        sequence per user.
    rates : mapping or callable
        ``rates[(p, S)]`` or ``rates(p, S)`` gives the per-user rate tuple
        for power vector ``p`` and channel state ``S`` (both tuples).

    Each event ``(S, a)`` gets one option per power vector ``p`` with
    ``y_0 = sum p`` and ``y_k = a_k - rate_k(p, S)``; every ``c_k`` is 0.
    """
    if num_users < 1:
        raise ValidationError("num_users must be positive")
    if len(arrivals) != num_users:
        raise ValidationError(f"need {num_users} arrival distributions, got {len(arrivals)}")
    arr = [_distribution(a, f"arrival (user {k + 1})") for k, a in enumerate(arrivals)]
    chan = _distribution(channels, "channel")
    for state, _ in chan:
        if len(state) != num_users:
            raise ValidationError(f"channel state {state!r} must have {num_users} entries")
    if len(power_levels) == 0:
        raise ValidationError("power alphabet is empty")
    if all(isinstance(p, (int, float)) for p in power_levels):
        levels = [list(power_levels)] * num_users
    else:
        levels = [list(p) for p in power_levels]
        if len(levels) != num_users or any(len(p) == 0 for p in levels):
            raise ValidationError("per-user power alphabets must be nonempty, one per user")
    powers = list(itertools.product(*levels))

    if callable(rates):
        rate_fn = rates
    else:
        table = {(tuple(p), tuple(s)): tuple(r) for (p, s), r in rates.items()}

        def rate_fn(p, s):
            try:
                return table[(tuple(p), tuple(s))]
            except KeyError:
                raise ValidationError(f"rate table has no entry for power {p!r}, state {s!r}") from None

    event_ids, probs, options = [], [], []
    for (state, ps), *arrival in itertools.product(chan, *arr):
        a_vec = tuple(v for v, _ in arrival)
        prob = ps * math.prod(pa for _, pa in arrival)
        rows = []
        for p in powers:
            mu = rate_fn(tuple(p), tuple(state))
            if len(mu) != num_users:
                raise ValidationError(f"rate function must return {num_users} rates")
            rows.append([math.fsum(p)] + [a_vec[k] - mu[k] for k in range(num_users)])
        event_ids.append(f"S={_label(state)};a={_label(a_vec)}")
        probs.append(prob)
        options.append(rows)
    # products of probabilities can drift from 1 by a few ulps
    total = math.fsum(probs)
    probs = [p / total for p in probs]
    return StochasticProblem(
        c=np.zeros(num_users),
        events=RandomEventModel(event_ids, probs),
        options=options,
    )
