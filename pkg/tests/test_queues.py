import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dpp.errors import DomainError, ValidationError
from dpp.queues import (
    QueueState,
    lyapunov,
    queue_norm_bound,
    update_equality,
    update_inequality,
    violation_bound,
)

finite = st.floats(-1e6, 1e6, allow_nan=False)
nonneg = st.floats(0, 1e6, allow_nan=False)


@pytest.mark.parametrize("q,y,c,expected", [(0, 1, 3, 0), (2, 5, 1, 6), (5, -10, 0, 0)])
def test_update_inequality_examples(q, y, c, expected):
    assert update_inequality(q, y, c) == expected


@pytest.mark.parametrize("z,w,d,expected", [(0, 0.5, 0.5, 0), (-1, 0, 1, -2), (3, 1, 2, 2)])
def test_update_equality_examples(z, w, d, expected):
    assert update_equality(z, w, d) == expected


@pytest.mark.parametrize("bad", [math.nan, math.inf, -math.inf])
def test_updates_reject_non_finite(bad):
    with pytest.raises(ValidationError):
        update_inequality(0.0, bad, 0.0)
    with pytest.raises(ValidationError):
        update_equality(bad, 0.0, 0.0)


def test_update_inequality_rejects_negative_queue():
    with pytest.raises(ValidationError):
        update_inequality(-1.0, 0.0, 0.0)


@given(nonneg, finite, finite)
def test_inequality_queue_stays_nonnegative(q, y, c):
    out = update_inequality(q, y, c)
    assert out >= 0
    assert out >= q + y - c


def test_violation_bound_examples():
    assert violation_bound(0, 100, 2) == 2
    assert violation_bound(50, 100, 0) == 0.5
    with pytest.raises(DomainError):
        violation_bound(1.0, 0, 0.0)


@given(st.lists(st.floats(-5, 5, allow_nan=False), min_size=1, max_size=200), st.floats(-2, 2))
def test_violation_identity_on_replayed_arrivals(ys, c):
    q = 0.0
    total = 0.0
    for t, y in enumerate(ys, start=1):
        q = update_inequality(q, y, c)
        total += y
        assert total / t <= violation_bound(q, t, c) + 1e-9 * t


@given(st.lists(st.floats(-5, 5, allow_nan=False), min_size=1, max_size=300), st.floats(-2, 2))
def test_equality_telescoping(ws, d):
    z = 0.0
    for w in ws:
        z = update_equality(z, w, d)
    assert abs(z - sum(w - d for w in ws)) <= 1e-9 * len(ws)


def test_lyapunov_examples():
    assert lyapunov(QueueState.zeros(3)) == 0
    assert lyapunov(QueueState([3, 4])) == 12.5
    assert lyapunov(QueueState([1], [-2])) == 2.5


def test_queue_state_rejects_negative_ineq():
    with pytest.raises(ValidationError):
        QueueState([-0.1])


def test_queue_norm_bound_examples():
    assert queue_norm_bound(10, 0, 0.5, 100) == pytest.approx(10)
    assert queue_norm_bound(1, 1, 0, 5) == pytest.approx(2)


@pytest.mark.parametrize("args", [(0, 1, 1, 1), (1, -1, 1, 1), (1, 1, -1, 1), (1, 1, 1, 0)])
def test_queue_norm_bound_domain(args):
    with pytest.raises(DomainError):
        queue_norm_bound(*args)


@given(
    st.floats(0.01, 1e3),
    st.floats(0, 1e2),
    st.floats(0, 1e2),
    st.integers(1, 10**6),
    st.floats(1.0, 3.0),
)
def test_queue_norm_bound_monotone(v, mu, b, t, factor):
    base = queue_norm_bound(v, mu, b, t)
    assert queue_norm_bound(v * factor, mu, b, t) >= base
    assert queue_norm_bound(v, mu * factor, b, t) >= base
    assert queue_norm_bound(v, mu, b * factor, t) >= base
    assert queue_norm_bound(v, mu, b, t + 1) >= base


@given(st.floats(0.005, 1.0), st.floats(0, 10), st.floats(0, 10))
def test_bound_over_t_matches_convergence_algebra(eps, mu, b):
    # at t = ceil(1/eps^2) with V = 1/eps the per-slot bound is at most (|mu| + sqrt(|mu|^2 + 2B)) eps
    t = math.ceil(1 / eps**2)
    lhs = queue_norm_bound(1 / eps, mu, b, t) / t
    rhs = (mu + math.sqrt(mu * mu + 2 * b)) * eps
    assert lhs <= rhs * (1 + 1e-12) + 1e-15


def test_bound_is_root_of_quadratic():
    x = queue_norm_bound(3.0, 0.7, 2.0, 17)
    assert x * x - 2 * 3.0 * 0.7 * x - 2 * 2.0 * 17 == pytest.approx(0.0, abs=1e-9)


def test_queue_state_copy_and_norm():
    s = QueueState([3, 0], [4])
    c = s.copy()
    c.ineq[0] = 1
    assert s.ineq[0] == 3
    assert s.norm() == pytest.approx(5)
    assert np.array_equal(QueueState.zeros(2, 1).eq, [0.0])
