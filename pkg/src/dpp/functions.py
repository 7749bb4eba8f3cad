"""Convex functions and feasible sets used by the deterministic engines.

Two concrete families cover everything the problem-file schema can express:
:class:`DiagQuadratic` (``sum q_i x_i^2 + a.x + b`` with ``q >= 0``) and its
special case :class:`Affine`.  Both are closed under nonnegative weighted
sums and under embedding into a larger coordinate space, which keeps the
per-slot objectives cheap to evaluate.  Arbitrary callables are wrapped by
:class:`ConvexFunction`; range and Lipschitz information for those must be
declared by the caller.
"""

from __future__ import annotations

import math
from typing import Callable, Sequence

import numpy as np

from .errors import ValidationError


def _vec(x, name="vector") -> np.ndarray:
    arr = np.asarray(x, dtype=float).reshape(-1)
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} must be finite")
    return arr


class Box:
    """Hyper-rectangle ``{x : lower <= x <= upper}`` with ``lower < upper``."""

    def __init__(self, lower, upper):
        self.lower = _vec(lower, "box lower bound")
        self.upper = _vec(upper, "box upper bound")
        if self.lower.shape != self.upper.shape:
            raise ValidationError(
                f"box bounds have different lengths ({self.lower.size} vs {self.upper.size})"
            )
        bad = np.nonzero(~(self.lower < self.upper))[0]
        if bad.size:
            i = int(bad[0])
            raise ValidationError(
                f"box requires lower < upper componentwise; violated at index {i} "
                f"({self.lower[i]!r} >= {self.upper[i]!r})"
            )

    @property
    def dim(self) -> int:
        return self.lower.size

    def project(self, x) -> np.ndarray:
        return np.minimum(np.maximum(x, self.lower), self.upper)

    def center(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)

    def diameter(self) -> float:
        return float(np.linalg.norm(self.upper - self.lower))

    def contains(self, x, tol=0.0) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lower - tol) and np.all(x <= self.upper + tol))

    def corners(self) -> np.ndarray:
        """All ``2^N`` corners, in lexicographic order (lower before upper)."""
        n = self.dim
        bits = (np.arange(2**n)[:, None] >> np.arange(n - 1, -1, -1)[None, :]) & 1
        return np.where(bits == 1, self.upper, self.lower)

    def __repr__(self):
        return f"Box({self.lower.tolist()}, {self.upper.tolist()})"


class ProjectableSet:
    """Compact convex set given only by a Euclidean projection operator.

    ``diameter`` must be supplied; it sets the inner solver's initial step.
    """

    def __init__(self, project: Callable[[np.ndarray], np.ndarray], dim: int, diameter: float):
        if dim < 1:
            raise ValidationError("set dimension must be positive")
        if not diameter > 0:
            raise ValidationError("diameter must be positive")
        self._project = project
        self.dim = int(dim)
        self._diameter = float(diameter)

    def project(self, x) -> np.ndarray:
        return np.asarray(self._project(np.asarray(x, dtype=float)), dtype=float)

    def center(self) -> np.ndarray:
        return self.project(np.zeros(self.dim))

    def diameter(self) -> float:
        return self._diameter


class ConvexFunction:
    """A convex function with a subgradient oracle.

    Parameters
    ----------
    evaluate, subgradient : callable
        ``x -> float`` and ``x -> ndarray``.
    dim : int
        Input dimension.
    bounds : (float, float), optional
        Declared range ``(min, max)`` over the feasible set.  Needed to
        compute the drift constant B for non-affine constraints.
    lipschitz : float, optional
        Declared bound on ``||subgradient||_1`` over the feasible set, used
        by the grid oracle for its error bar.
    """

    def __init__(self, evaluate, subgradient, dim, *, bounds=None, lipschitz=None):
        self._evaluate = evaluate
        self._subgradient = subgradient
        self.dim = int(dim)
        self.bounds = None if bounds is None else (float(bounds[0]), float(bounds[1]))
        self.lipschitz = None if lipschitz is None else float(lipschitz)

    is_affine = False

    def __call__(self, x) -> float:
        return float(self._evaluate(np.asarray(x, dtype=float)))

    def subgradient(self, x) -> np.ndarray:
        return np.asarray(self._subgradient(np.asarray(x, dtype=float)), dtype=float)

    def evaluate_many(self, points: np.ndarray) -> np.ndarray:
        return np.array([self(p) for p in points], dtype=float)

    def range_on(self, box: Box) -> tuple[float, float]:
        if self.bounds is None:
            raise ValidationError(
                "function has no declared range; declare bounds=(lo, hi) for non-affine constraints"
            )
        return self.bounds

    def lipschitz_on(self, box: Box) -> float:
        return math.inf if self.lipschitz is None else self.lipschitz


class DiagQuadratic(ConvexFunction):
    """``f(x) = sum_i q_i x_i^2 + a.x + b`` with ``q_i >= 0``."""

    def __init__(self, q, a, b=0.0):
        self.q = _vec(q, "quadratic coefficients q")
        self.a = _vec(a, "linear coefficients a")
        if self.q.shape != self.a.shape:
            raise ValidationError(
                f"q and a must have the same length ({self.q.size} vs {self.a.size})"
            )
        if np.any(self.q < 0):
            raise ValidationError("quadratic coefficients q must be nonnegative for convexity")
        if not math.isfinite(b):
            raise ValidationError("constant b must be finite")
        self.b = float(b)
        self.dim = self.q.size
        self.bounds = None
        self.lipschitz = None
        self.is_affine = not np.any(self.q)

    def __call__(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(self.q @ (x * x) + self.a @ x + self.b)

    def subgradient(self, x) -> np.ndarray:
        return 2.0 * self.q * np.asarray(x, dtype=float) + self.a

    def evaluate_many(self, points: np.ndarray) -> np.ndarray:
        p = np.asarray(points, dtype=float)
        return (p * p) @ self.q + p @ self.a + self.b

    def _coord_ranges(self, box: Box):
        lo, hi = box.lower, box.upper
        at_lo = self.q * lo * lo + self.a * lo
        at_hi = self.q * hi * hi + self.a * hi
        top = np.maximum(at_lo, at_hi)
        bottom = np.minimum(at_lo, at_hi)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            stat = np.where(self.q > 0, -self.a / (2.0 * np.where(self.q > 0, self.q, 1.0)), np.nan)
        inside = (self.q > 0) & (stat > lo) & (stat < hi)
        if np.any(inside):
            s_in = stat[inside]
            bottom = bottom.copy()
            bottom[inside] = np.minimum(bottom[inside], self.q[inside] * s_in * s_in + self.a[inside] * s_in)
        return bottom, top

    def range_on(self, box: Box) -> tuple[float, float]:
        """Exact ``(min, max)`` over a box; the function is separable."""
        self._check_dim(box.dim)
        bottom, top = self._coord_ranges(box)
        return float(bottom.sum() + self.b), float(top.sum() + self.b)

    def lipschitz_on(self, box: Box) -> float:
        """Max of ``||grad f||_1`` over a box."""
        self._check_dim(box.dim)
        g_lo = np.abs(2.0 * self.q * box.lower + self.a)
        g_hi = np.abs(2.0 * self.q * box.upper + self.a)
        return float(np.maximum(g_lo, g_hi).sum())

    def minimize_on(self, box: Box) -> np.ndarray:
        """Exact minimizer over a box (closed form, coordinate-wise).

        Used only by the oracle; the engines go through ``inner_minimize``.
        Linear coordinates with zero slope take the lower bound.
        """
        self._check_dim(box.dim)
        x = np.where(self.a < 0, box.upper, box.lower)
        quad = self.q > 0
        if np.any(quad):
            with np.errstate(divide="ignore", over="ignore"):
                stat = -self.a[quad] / (2.0 * self.q[quad])
            x[quad] = np.clip(stat, box.lower[quad], box.upper[quad])
        return x

    def _check_dim(self, n):
        if n != self.dim:
            raise ValidationError(f"function has dimension {self.dim}, set has {n}")

    def __repr__(self):
        if self.is_affine:
            return f"Affine(a={self.a.tolist()}, b={self.b})"
        return f"DiagQuadratic(q={self.q.tolist()}, a={self.a.tolist()}, b={self.b})"


class Affine(DiagQuadratic):
    """``f(x) = a.x + b``."""

    def __init__(self, a, b=0.0):
        a = _vec(a, "linear coefficients a")
        super().__init__(np.zeros_like(a), a, b)


def weighted_sum(terms: Sequence[tuple[float, ConvexFunction]]) -> ConvexFunction:
    """``x -> sum w * f(x)`` over ``(w, f)`` pairs.

    Collapses to a single :class:`DiagQuadratic` when every term is one.
    A negative weight is only convexity-preserving on affine terms, which the
    callers guarantee.
    """
    if not terms:
        raise ValidationError("weighted_sum needs at least one term")
    dims = {f.dim for _, f in terms}
    if len(dims) != 1:
        raise ValidationError(f"terms have mismatched dimensions {sorted(dims)}")
    if all(isinstance(f, DiagQuadratic) for _, f in terms):
        w0, f0 = terms[0]
        q = w0 * f0.q
        a = w0 * f0.a
        b = w0 * f0.b
        for w, f in terms[1:]:
            q = q + w * f.q
            a = a + w * f.a
            b = b + w * f.b
        if np.any(q < 0):
            raise ValidationError("negative weight on a quadratic term breaks convexity")
        return DiagQuadratic(q, a, b)

    def evaluate(x):
        total = 0.0
        for w, f in terms:
            total += w * f(x)
        return total

    def subgradient(x):
        total = np.zeros(len(x))
        for w, f in terms:
            total = total + w * f.subgradient(x)
        return total

    return ConvexFunction(evaluate, subgradient, dims.pop())


def embed(f: ConvexFunction, indices: Sequence[int], dim: int) -> ConvexFunction:
    """Lift ``f`` so it reads coordinates ``indices`` of a ``dim``-vector."""
    idx = np.asarray(indices, dtype=int)
    if idx.size != f.dim:
        raise ValidationError(f"embedding needs {f.dim} indices, got {idx.size}")
    if idx.size and (idx.min() < 0 or idx.max() >= dim or np.unique(idx).size != idx.size):
        raise ValidationError("embedding indices must be distinct and inside the target dimension")
    if isinstance(f, DiagQuadratic):
        q = np.zeros(dim)
        a = np.zeros(dim)
        q[idx] = f.q
        a[idx] = f.a
        return DiagQuadratic(q, a, f.b)

    def evaluate(x):
        return f(x[idx])

    def subgradient(x):
        g = np.zeros(dim)
        g[idx] = f.subgradient(x[idx])
        return g

    return ConvexFunction(evaluate, subgradient, dim, bounds=f.bounds, lipschitz=f.lipschitz)


def product_box(boxes: Sequence[Box]) -> Box:
    return Box(
        np.concatenate([b.lower for b in boxes]),
        np.concatenate([b.upper for b in boxes]),
    )
