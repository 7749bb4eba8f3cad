"""Virtual queues and the closed-form bounds that follow from them.

Inequality queues enforce ``avg(y_k) <= c_k`` and are clipped at zero;
equality queues enforce ``avg(w_i) == d_i`` and are signed.  All update
functions are pure; engines own the mutation of :class:`QueueState`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, ValidationError


def _check_finite(**values):
    for name, val in values.items():
        if not math.isfinite(val):
            raise ValidationError(f"{name} must be finite, got {val!r}")


def update_inequality(q: float, y: float, c: float) -> float:
    """Return ``max(q + y - c, 0)``."""
    _check_finite(q=q, y=y, c=c)
    if q < 0:
        raise ValidationError(f"inequality queue must be nonnegative, got {q!r}")
    return max(q + y - c, 0.0)


def update_equality(z: float, w: float, d: float) -> float:
    """Return ``z + w - d`` (no clipping)."""
    _check_finite(z=z, w=w, d=d)
    return z + w - d


def violation_bound(q_t: float, t: int, c: float) -> float:
    """Upper bound ``c + q_t / t`` on the running average of the arrivals.

    Holds on every sample path: summing ``Q(tau+1) >= Q(tau) + y(tau) - c``
    from ``Q(0) = 0`` gives ``sum(y) - t c <= Q(t)``.
    """
    if t < 1:
        raise DomainError(f"t must be a positive integer, got {t!r}")
    return c + q_t / t


def queue_norm_bound(v: float, mu_norm: float, b: float, t: int) -> float:
    """Largest root of ``x^2 - 2 v |mu| x - 2 b t = 0``.

    This is the bound ``V|mu| + sqrt(V^2 |mu|^2 + 2 B t)`` on the norm of
    the (expected) queue vector at slot ``t``.
    """
    if v <= 0:
        raise DomainError(f"v must be positive, got {v!r}")
    if t < 1:
        raise DomainError(f"t must be a positive integer, got {t!r}")
    if b < 0:
        raise DomainError(f"b must be nonnegative, got {b!r}")
    if mu_norm < 0:
        raise DomainError(f"mu_norm must be nonnegative, got {mu_norm!r}")
    vm = v * mu_norm
    return vm + math.sqrt(vm * vm + 2.0 * b * t)


@dataclass
class QueueState:
    """Inequality backlogs ``ineq`` (length K) and signed backlogs ``eq`` (length M)."""

    ineq: np.ndarray = field(default_factory=lambda: np.zeros(0))
    eq: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        self.ineq = np.array(self.ineq, dtype=float).reshape(-1)
        self.eq = np.array(self.eq, dtype=float).reshape(-1)
        if np.any(self.ineq < 0):
            raise ValidationError("inequality queues must be nonnegative")

    @classmethod
    def zeros(cls, k: int, m: int = 0) -> "QueueState":
        return cls(np.zeros(k), np.zeros(m))

    @property
    def K(self) -> int:
        return self.ineq.size

    @property
    def M(self) -> int:
        return self.eq.size

    def norm(self) -> float:
        return math.sqrt(float(self.ineq @ self.ineq + self.eq @ self.eq))

    def copy(self) -> "QueueState":
        return QueueState(self.ineq.copy(), self.eq.copy())


def lyapunov(state: QueueState) -> float:
    """``0.5 * (sum Q_k^2 + sum Z_i^2)``."""
    return 0.5 * (float(state.ineq @ state.ineq) + float(state.eq @ state.eq))
