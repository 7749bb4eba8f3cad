"""Per-slot run records shared by the stochastic and deterministic engines."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DomainError
from .queues import QueueState


def fmt(value) -> str:
    """Locale-free float formatting with 17 significant digits."""
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return format(float(value), ".17g")


@dataclass
class Trace:
    """Record of one run.

    Row ``tau`` of ``y`` holds ``(y_0, ..., y_K)`` chosen on slot ``tau``;
    ``queues[t]`` is ``Q(t)``, so row 0 is the all-zero initial state and row
    ``tau + 1`` is the state after the slot-``tau`` update.  ``zqueues`` and
    ``w`` play the same roles for equality constraints.  ``x`` and
    ``xbar`` are present for deterministic runs; ``xbar[t - 1]`` is the
    incrementally updated average over slots ``0..t-1``.
    """

    v: float
    c: np.ndarray
    y: np.ndarray
    queues: np.ndarray
    d: np.ndarray = field(default_factory=lambda: np.zeros(0))
    w: np.ndarray | None = None
    zqueues: np.ndarray | None = None
    events: np.ndarray | None = None
    event_ids: list | None = None
    options: np.ndarray | None = None
    x: np.ndarray | None = None
    xbar: np.ndarray | None = None
    inner_gap: np.ndarray | None = None

    def __post_init__(self):
        t = self.y.shape[0]
        if self.w is None:
            self.w = np.zeros((t, self.d.size))
        if self.zqueues is None:
            self.zqueues = np.zeros((t + 1, self.d.size))
        self._cum_y = None
        self._cum_w = None
        self._cum_x = None

    def __len__(self) -> int:
        return self.y.shape[0]

    @property
    def K(self) -> int:
        return self.c.size

    @property
    def M(self) -> int:
        return self.d.size

    def _check_t(self, t):
        if not 1 <= t <= len(self):
            raise DomainError(f"t must lie in 1..{len(self)}, got {t!r}")

    def averages(self) -> np.ndarray:
        """Running averages: row ``t - 1`` is ``ybar(t)`` for every component."""
        if self._cum_y is None:
            self._cum_y = np.cumsum(self.y, axis=0)
        return self._cum_y / np.arange(1, len(self) + 1)[:, None]

    def w_averages(self) -> np.ndarray:
        if self._cum_w is None:
            self._cum_w = np.cumsum(self.w, axis=0)
        return self._cum_w / np.arange(1, len(self) + 1)[:, None]

    def x_average(self, t: int) -> np.ndarray:
        """Exact ``xbar(t)`` from the running sum (compare with ``xbar[t-1]``)."""
        self._check_t(t)
        if self.x is None:
            raise DomainError("trace has no decision vectors")
        if self._cum_x is None:
            self._cum_x = np.cumsum(self.x, axis=0)
        return self._cum_x[t - 1] / t

    def queue_state(self, t: int) -> QueueState:
        if not 0 <= t <= len(self):
            raise DomainError(f"t must lie in 0..{len(self)}, got {t!r}")
        return QueueState(self.queues[t], self.zqueues[t])

    def queue_norms(self) -> np.ndarray:
        """``||(Q(t), Z(t))||`` for ``t = 0..T``."""
        return np.sqrt(np.sum(self.queues**2, axis=1) + np.sum(self.zqueues**2, axis=1))

    def max_inner_gap(self) -> float:
        if self.inner_gap is None or self.inner_gap.size == 0:
            return 0.0
        return float(np.max(self.inner_gap))

    def write_csv(self, path) -> None:
        """Write one row per slot (see :func:`csv_header` for the columns)."""
        path = Path(path)
        avg = self.averages()
        with path.open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(csv_header(self))
            for tau in range(len(self)):
                row = [str(tau)]
                if self.events is not None:
                    row.append(str(self.event_ids[self.events[tau]]))
                    row.append(str(int(self.options[tau])))
                if self.x is not None:
                    row.extend(fmt(v) for v in self.x[tau])
                row.extend(fmt(v) for v in self.y[tau])
                row.extend(fmt(v) for v in self.queues[tau + 1])
                row.extend(fmt(v) for v in self.zqueues[tau + 1])
                row.extend(fmt(v) for v in avg[tau])
                if self.xbar is not None:
                    row.extend(fmt(v) for v in self.xbar[tau])
                writer.writerow(row)


def csv_header(trace: Trace) -> list[str]:
    """Stochastic traces: ``t, event, option, y0..yK, Q1..QK, avg_y0..avg_yK``.

    Deterministic traces insert ``x1..xN`` after ``t``, ``Z1..ZM`` after the
    Q columns, and ``xbar1..xbarN`` at the end.
    """
    k = trace.K
    cols = ["t"]
    if trace.events is not None:
        cols += ["event", "option"]
    if trace.x is not None:
        cols += [f"x{i + 1}" for i in range(trace.x.shape[1])]
    cols += [f"y{i}" for i in range(k + 1)]
    cols += [f"Q{i + 1}" for i in range(k)]
    cols += [f"Z{i + 1}" for i in range(trace.M)]
    cols += [f"avg_y{i}" for i in range(k + 1)]
    if trace.xbar is not None:
        cols += [f"xbar{i + 1}" for i in range(trace.x.shape[1])]
    return cols


def time_average(trace: Trace, t: int, k: int) -> float:
    """Sample-path average of component ``k`` over slots ``0..t-1``."""
    trace._check_t(t)
    if not 0 <= k <= trace.K:
        raise DomainError(f"component index must lie in 0..{trace.K}, got {k!r}")
    return float(trace.averages()[t - 1, k])
