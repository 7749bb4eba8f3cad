"""Linear programs over boxes: the closed-form bang-bang specialization.

For ``min b.x`` s.t. ``A x <= c`` on ``[x_min, x_max]`` the per-slot
problem separates by coordinate, so every decision sits on a corner and no
inner solver is needed.  Only the running average ``xbar`` moves off the
corners.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .convex import ConvexProgram
from .errors import ValidationError
from .functions import Affine, Box
from .queues import QueueState, update_inequality
from .trace import Trace


@dataclass
class LinearProgram:
    """``min b.x`` s.t. ``A x <= c``, ``x_min <= x <= x_max``.

    ``A`` has shape ``(K, N)``; ``K`` may be zero.
    """

    b: np.ndarray
    A: np.ndarray
    c: np.ndarray
    x_min: np.ndarray
    x_max: np.ndarray

    def __post_init__(self):
        self.b = np.asarray(self.b, dtype=float).reshape(-1)
        n = self.b.size
        if n < 1:
            raise ValidationError("b must have at least one entry")
        self.A = np.asarray(self.A, dtype=float)
        if self.A.size == 0:
            self.A = self.A.reshape(0, n)
        if self.A.ndim != 2 or self.A.shape[1] != n:
            raise ValidationError(f"A must have shape (K, {n}), got {self.A.shape}")
        self.c = np.asarray(self.c, dtype=float).reshape(-1)
        if self.c.size != self.A.shape[0]:
            raise ValidationError(f"c has length {self.c.size}, A has {self.A.shape[0]} rows")
        # Box does the x_min < x_max check and names the offending index
        box = Box(self.x_min, self.x_max)
        if box.dim != n:
            raise ValidationError(f"x_min/x_max have length {box.dim}, b has {n}")
        self.x_min, self.x_max = box.lower, box.upper
        for name in ("b", "A", "c"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValidationError(f"{name} must be finite")

    @property
    def N(self) -> int:
        return self.b.size

    @property
    def K(self) -> int:
        return self.A.shape[0]

    def box(self) -> Box:
        return Box(self.x_min, self.x_max)

    def objective(self, x) -> float:
        return float(self.b @ np.asarray(x, dtype=float))

    def to_convex(self) -> ConvexProgram:
        return ConvexProgram(
            f=Affine(self.b),
            feasible_set=self.box(),
            g=[Affine(row) for row in self.A],
            c=self.c.copy(),
        )


def _coord_scores(lp: LinearProgram, q, v: float) -> np.ndarray:
    # same left-to-right order as a scalar loop over k
    s = v * lp.b
    for k in range(lp.K):
        s = s + q[k] * lp.A[k]
    return s


def lp_per_slot_decision(lp: LinearProgram, queues, v: float) -> np.ndarray:
    """``x_i = x_max,i`` if ``v b_i + sum_k Q_k A_ki <= 0``, else ``x_min,i``."""
    q = queues.ineq if isinstance(queues, QueueState) else np.asarray(queues, dtype=float).reshape(-1)
    if q.size != lp.K:
        raise ValidationError(f"queue length {q.size} does not match K = {lp.K}")
    if not v > 0:
        raise ValidationError(f"v must be positive, got {v!r}")
    return np.where(_coord_scores(lp, q, v) <= 0.0, lp.x_max, lp.x_min)


def run_lp(lp: LinearProgram, v: float, t_max: int) -> Trace:
    """Bang-bang drift-plus-penalty loop with incremental primal averaging."""
    if not v > 0:
        raise ValidationError(f"v must be positive, got {v!r}")
    if t_max < 1:
        raise ValidationError(f"t_max must be positive, got {t_max!r}")
    k, n = lp.K, lp.N
    c = [float(ci) for ci in lp.c]
    q = np.zeros(k)
    xs = np.empty((t_max, n))
    xbar = np.empty((t_max, n))
    ys = np.empty((t_max, k + 1))
    queues = np.zeros((t_max + 1, k))
    avg = np.zeros(n)
    for tau in range(t_max):
        x = np.where(_coord_scores(lp, q, v) <= 0.0, lp.x_max, lp.x_min)
        ys[tau, 0] = lp.b @ x
        ys[tau, 1:] = lp.A @ x
        for i in range(k):
            q[i] = update_inequality(q[i], ys[tau, i + 1], c[i])
        avg = avg * (tau / (tau + 1)) + x / (tau + 1)
        xs[tau] = x
        xbar[tau] = avg
        queues[tau + 1] = q
    return Trace(
        v=float(v),
        c=lp.c.copy(),
        y=ys,
        queues=queues,
        x=xs,
        xbar=xbar,
        inner_gap=np.zeros(t_max),
    )


def constraint_ranges(lp: LinearProgram) -> tuple[np.ndarray, np.ndarray]:
    """Exact ``(min, max)`` of each row ``A_k . x`` over the box."""
    lo_part = np.where(lp.A > 0, lp.A * lp.x_min, lp.A * lp.x_max)
    hi_part = np.where(lp.A > 0, lp.A * lp.x_max, lp.A * lp.x_min)
    return lo_part.sum(axis=1), hi_part.sum(axis=1)


def compute_B_lp(lp: LinearProgram) -> float:
    """``0.5 * sum_k (max over the box of |A_k . x - c_k|)^2``, by interval evaluation."""
    lo, hi = constraint_ranges(lp)
    dev = np.maximum(np.abs(lo - lp.c), np.abs(hi - lp.c))
    return 0.5 * float(dev @ dev)
