import math

import numpy as np
import pytest
from conftest import downlink_problem, two_event_toy
from hypothesis import given
from hypothesis import strategies as st

from dpp.errors import DomainError, ValidationError
from dpp.queues import QueueState
from dpp.stochastic import (
    RandomEventModel,
    SplitMix64,
    StochasticProblem,
    build_downlink_problem,
    compute_B,
    per_slot_decision,
    run,
)
from dpp.trace import csv_header, time_average

# reference outputs of Vigna's splitmix64.c
SPLITMIX_VECTORS = {
    0: [16294208416658607535, 7960286522194355700, 487617019471545679, 17909611376780542444],
    1234567: [6457827717110365317, 3203168211198807973, 9817491932198370423, 4593380528125082431],
    42: [13679457532755275413, 2949826092126892291, 5139283748462763858, 6349198060258255764],
}
SEED42_UNIFORMS = [0.74156487877182331, 0.1599103928769201, 0.27860113025513866]


@pytest.mark.parametrize("seed", sorted(SPLITMIX_VECTORS))
def test_splitmix64_reference_stream(seed):
    rng = SplitMix64(seed)
    assert [rng.next_u64() for _ in range(4)] == SPLITMIX_VECTORS[seed]


def test_splitmix64_uniforms():
    rng = SplitMix64(42)
    assert [rng.random() for _ in range(3)] == SEED42_UNIFORMS


def test_event_model_draws_follow_frozen_uniforms():
    # u = 0.742, 0.160, 0.279 against cdf (0.5, 1.0) -> events 1, 0, 0
    model = RandomEventModel(["a", "b"], [0.5, 0.5])
    rng = SplitMix64(42)
    assert [model.draw(rng) for _ in range(3)] == [1, 0, 0]


def test_event_model_never_draws_zero_probability_tail():
    model = RandomEventModel(["a", "b", "c"], [0.25, 0.75, 0.0])
    rng = SplitMix64(3)
    assert max(model.draw(rng) for _ in range(5000)) <= 1


@pytest.mark.parametrize(
    "events,probs",
    [([], []), (["a"], [0.9]), (["a", "b"], [0.5]), (["a", "b"], [1.5, -0.5]), (["a"], [math.nan])],
)
def test_event_model_validation(events, probs):
    with pytest.raises(ValidationError):
        RandomEventModel(events, probs)


def test_event_frequencies_match_probabilities():
    model = RandomEventModel(["a", "b", "c"], [0.2, 0.3, 0.5])
    rng = SplitMix64(11)
    counts = np.bincount([model.draw(rng) for _ in range(20000)], minlength=3)
    assert np.allclose(counts / 20000, [0.2, 0.3, 0.5], atol=0.015)


def test_per_slot_decision_examples():
    opts = [(5, 0), (0, 5)]
    assert per_slot_decision(opts, QueueState([0.0]), 1.0) == 1
    assert per_slot_decision(opts, QueueState([2.0]), 1.0) == 0


def test_per_slot_decision_ties_lowest_index():
    assert per_slot_decision([(1, 1), (1, 1), (0, 2)], QueueState([1.0]), 1.0) == 0


def test_per_slot_decision_dimension_mismatch():
    with pytest.raises(ValidationError):
        per_slot_decision([(1, 2, 3)], QueueState([1.0]), 1.0)
    with pytest.raises(ValidationError):
        per_slot_decision([], QueueState([1.0]), 1.0)


@given(
    st.integers(1, 3).flatmap(
        lambda k: st.tuples(
            st.lists(st.lists(st.integers(-5, 5), min_size=k + 1, max_size=k + 1), min_size=1, max_size=6),
            st.lists(st.integers(0, 20), min_size=k, max_size=k),
        )
    ),
    st.integers(1, 10),
)
def test_per_slot_decision_matches_scan(data, v):
    options, q = data
    idx = per_slot_decision(options, QueueState([float(x) for x in q]), float(v))
    scores = [v * o[0] + sum(qk * ok for qk, ok in zip(q, o[1:])) for o in options]
    assert scores[idx] == min(scores)
    assert idx == scores.index(min(scores))


def test_problem_validation():
    model = RandomEventModel(["a"], [1.0])
    with pytest.raises(ValidationError):
        StochasticProblem(c=[], events=model, options=[[[0]]])
    with pytest.raises(ValidationError):
        StochasticProblem(c=[0], events=model, options=[[[0, 1, 2]]])
    with pytest.raises(ValidationError):
        StochasticProblem(c=[0], events=model, options=[[]])
    with pytest.raises(ValidationError):
        StochasticProblem(c=[0], events=model, options=[[[0, math.inf]]])


def test_moment_bounds_recorded():
    p = two_event_toy()
    assert p.h[0] == 2
    assert p.h[1] == 4


def test_run_single_option_is_forced():
    model = RandomEventModel(["a", "b"], [0.5, 0.5])
    prob = StochasticProblem(c=[1.0], events=model, options=[[[1, 0]], [[3, 2]]])
    tr = run(prob, 10.0, 400, seed=5)
    assert np.all(tr.options == 0)
    expected = np.where(tr.events[:, None] == 0, [1, 0], [3, 2])
    assert np.array_equal(tr.y, expected)
    q = 0.0
    for tau in range(400):
        q = max(q + expected[tau, 1] - 1.0, 0.0)
        assert tr.queues[tau + 1, 0] == q


def test_run_deterministic_given_seed():
    p = downlink_problem()
    a, b = run(p, 20.0, 500, 9), run(p, 20.0, 500, 9)
    assert np.array_equal(a.y, b.y) and np.array_equal(a.queues, b.queues)
    assert np.array_equal(a.events, b.events)
    c = run(p, 20.0, 500, 10)
    assert not np.array_equal(a.events, c.events)


def test_run_every_slot_is_argmin():
    p = downlink_problem()
    tr = run(p, 20.0, 800, 3)
    for tau in range(800):
        opts = p.options[tr.events[tau]]
        scores = [20.0 * o[0] + sum(tr.queues[tau, k] * o[k + 1] for k in range(2)) for o in opts]
        assert tr.options[tau] == int(np.argmin(scores))


def test_run_validation():
    with pytest.raises(ValidationError):
        run(two_event_toy(), 0.0, 10, 1)
    with pytest.raises(ValidationError):
        run(two_event_toy(), 1.0, 0, 1)


def test_compute_B_examples():
    model = RandomEventModel(["a"], [1.0])
    assert compute_B(StochasticProblem([3.0], model, [[[7, 3]]])) == 0
    assert compute_B(StochasticProblem([1.0], model, [[[0, 0], [0, 2]]])) == 0.5


def test_compute_B_downlink_by_enumeration(downlink):
    worst = 0.0
    for ys in downlink.options:
        for y in ys:
            worst = max(worst, 0.5 * sum((y[k + 1] - 0.0) ** 2 for k in range(2)))
    assert compute_B(downlink) == worst == 2.5


def test_downlink_structure(downlink):
    assert len(downlink.events) == 8
    assert all(len(o) == 4 for o in downlink.options)
    assert math.fsum(downlink.events.probabilities) == pytest.approx(1.0, abs=1e-15)
    # event (S=(2,1), a=(1,1)), power (1,0): y = (1, 1-2, 1-0)
    i = downlink.events.events.index("S=(2, 1);a=(1, 1)")
    assert downlink.events.probabilities[i] == pytest.approx(0.5 * 0.4 * 0.5)
    assert list(downlink.options[i][2]) == [1.0, -1.0, 1.0]


def test_downlink_no_traffic_means_no_power():
    p = build_downlink_problem(1, [[(0, 1.0)]], [((1,), 1.0)], [0, 1], lambda pw, s: (pw[0],))
    tr = run(p, 20.0, 400, 1)
    assert time_average(tr, 400, 0) == 0.0


def test_downlink_forced_transmission():
    p = build_downlink_problem(1, [[(1, 1.0)]], [((1,), 1.0)], [0, 1], {((0,), (1,)): (0,), ((1,), (1,)): (1,)})
    tr = run(p, 20.0, 2000, 1)
    assert abs(time_average(tr, 2000, 0) - 1.0) <= 0.05


def test_downlink_validation():
    with pytest.raises(ValidationError):
        build_downlink_problem(1, [[]], [((1,), 1.0)], [0, 1], lambda p, s: (0,))
    with pytest.raises(ValidationError):
        build_downlink_problem(1, [[(0, 1.0)]], [], [0, 1], lambda p, s: (0,))
    with pytest.raises(ValidationError):
        build_downlink_problem(1, [[(0, 1.0)]], [((1,), 1.0)], [], lambda p, s: (0,))
    with pytest.raises(ValidationError):
        build_downlink_problem(1, [[(0, 1.0)]], [((1,), 1.0)], [0, 1], {})


def test_time_average_examples():
    model = RandomEventModel(["a", "b"], [0.5, 0.5])
    const = StochasticProblem([0.0], model, [[[2.0, 0.0]], [[2.0, 0.0]]])
    tr = run(const, 1.0, 10, 0)
    assert time_average(tr, 10, 0) == 2.0
    alt = run(StochasticProblem([0.0], model, [[[0.0, 0.0]], [[1.0, 0.0]]]), 1.0, 1000, 4)
    for t in (1, 17, 1000):
        assert time_average(alt, t, 0) == pytest.approx(alt.y[:t, 0].sum() / t, abs=1e-15)
    with pytest.raises(DomainError):
        time_average(tr, 0, 0)
    with pytest.raises(DomainError):
        time_average(tr, 11, 0)


def test_violation_identity_on_stochastic_trace(downlink):
    tr = run(downlink, 10.0, 1000, 2)
    avg = tr.averages()
    for t in range(1, 1001):
        assert np.all(avg[t - 1, 1:] - tr.c <= tr.queues[t] / t + 1e-12)
        assert np.all(tr.queues[t] >= 0)


def test_csv_header_and_bytes(tmp_path, downlink):
    tr = run(downlink, 10.0, 50, 2)
    assert csv_header(tr) == ["t", "event", "option", "y0", "y1", "y2", "Q1", "Q2", "avg_y0", "avg_y1", "avg_y2"]
    tr.write_csv(tmp_path / "a.csv")
    run(downlink, 10.0, 50, 2).write_csv(tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    lines = (tmp_path / "a.csv").read_text().splitlines()
    assert len(lines) == 51


def test_engine_never_reads_probabilities():
    p = two_event_toy()
    tr = run(p, 5.0, 300, 8)
    p.events.probabilities = [math.nan, math.nan]
    # decisions depend only on the sampled events and the queues
    for tau in range(300):
        assert per_slot_decision(p.options[tr.events[tau]], QueueState(tr.queues[tau]), 5.0) == tr.options[tau]


def test_lowest_index_tie_in_engine():
    model = RandomEventModel(["a"], [1.0])
    p = StochasticProblem([5.0], model, [[[1, 0], [1, 0], [0, 1]]])
    tr = run(p, 1.0, 5, 0)
    # scores (1, 1, 0) at Q = 0 -> option 2; queue stays 0 since 1 < 5
    assert list(tr.options) == [2] * 5
