"""Query/dataset relevance from per-dimension interval overlap.

A node advertises its data through a digest (per-dimension mean, spread,
cardinality).  The digest expands into confidence intervals which are
matched against the query's constraint intervals dimension by dimension;
the per-dimension mismatch scores aggregate into a single relevance value
where LOWER means a better data match.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .complexity import quasi_arithmetic_mean

__all__ = [
    "IntervalVector",
    "confidence_intervals",
    "interval_intersection_length",
    "overlap_mismatch",
    "relevance",
    "relevance_batch",
]


@dataclass(frozen=True)
class IntervalVector:
    """L (lo, hi) interval rows with lo <= hi everywhere."""

    intervals: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.intervals, dtype=float)
        if arr.ndim != 2 or arr.shape[1] != 2:
            raise ValueError(f"expected shape (L, 2), got {arr.shape}")
        if np.any(arr[:, 0] > arr[:, 1]):
            raise ValueError("interval lower bounds must not exceed upper bounds")
        object.__setattr__(self, "intervals", arr)

    def __len__(self) -> int:
        return self.intervals.shape[0]


def _as_intervals(x) -> np.ndarray:
    arr = getattr(x, "intervals", x)
    return np.asarray(arr, dtype=float)


def confidence_intervals(digest, z: float, denominator: str = "n") -> IntervalVector:
    """Per-dimension interval (mean - z*spread/d, mean + z*spread/d).

    ``denominator`` selects d: the digest cardinality itself ("n", the
    default) or its square root ("sqrt_n").
    """
    if z <= 0:
        raise ValueError(f"z must be positive, got {z}")
    means = np.asarray(digest.means, dtype=float)
    spreads = np.asarray(digest.spreads, dtype=float)
    if denominator == "n":
        d = float(digest.cardinality)
    elif denominator == "sqrt_n":
        d = float(np.sqrt(digest.cardinality))
    else:
        raise ValueError(f"denominator must be 'n' or 'sqrt_n', got {denominator!r}")
    half = z * spreads / d
    return IntervalVector(np.stack([means - half, means + half], axis=1))


def interval_intersection_length(a, b) -> float:
    """Length of the common sub-interval of two intervals, 0 if disjoint."""
    lo = max(a[0], b[0])
    hi = min(a[1], b[1])
    return hi - lo if lo < hi else 0.0


def overlap_mismatch(a, b) -> float:
    """Mismatch in [0, 1]: 1 - intersection length over the shorter length.

    0 when one interval contains the other, 1 when they are disjoint.  With
    a zero-length denominator the limit behaviour applies: 0 if the
    intervals still touch as point sets, else 1.
    """
    la = a[1] - a[0]
    lb = b[1] - b[0]
    shorter = min(la, lb)
    if shorter <= 0.0:
        touches = max(a[0], b[0]) <= min(a[1], b[1])
        return 0.0 if touches else 1.0
    inter = interval_intersection_length(a, b)
    return float(np.clip(1.0 - inter / shorter, 0.0, 1.0))


def _mismatch_matrix(w: np.ndarray, f: np.ndarray) -> np.ndarray:
    """Vectorised overlap_mismatch; w is (L, 2), f is (..., L, 2)."""
    lo = np.maximum(w[..., 0], f[..., 0])
    hi = np.minimum(w[..., 1], f[..., 1])
    inter = np.maximum(hi - lo, 0.0)
    shorter = np.minimum(w[..., 1] - w[..., 0], f[..., 1] - f[..., 0])
    with np.errstate(invalid="ignore"):
        psi = np.clip(1.0 - np.divide(inter, shorter, out=np.ones_like(inter), where=shorter > 0), 0.0, 1.0)
    degenerate = shorter <= 0
    if np.any(degenerate):
        touches = lo <= hi
        psi = np.where(degenerate, np.where(touches, 0.0, 1.0), psi)
    return psi


def relevance(constraints, intervals, alpha: float) -> float:
    """Aggregate per-dimension mismatches into a relevance value in [0, 1].

    Lower is better: 0 means every constraint interval is matched by the
    node's data intervals.
    """
    w = _as_intervals(constraints)
    f = _as_intervals(intervals)
    if w.shape != f.shape:
        raise ValueError(f"dimensionality mismatch: {w.shape} vs {f.shape}")
    psis = _mismatch_matrix(w, f)
    return min(1.0, quasi_arithmetic_mean(psis, alpha))


def relevance_batch(constraints, interval_batch: np.ndarray, alpha: float) -> np.ndarray:
    """Relevance of one query against many nodes; interval_batch is (N, L, 2)."""
    if alpha == 0:
        raise ValueError("alpha must be non-zero")
    w = _as_intervals(constraints)
    f = np.asarray(interval_batch, dtype=float)
    if f.ndim != 3 or f.shape[1:] != w.shape:
        raise ValueError(f"expected interval batch of shape (N, {w.shape[0]}, 2), got {f.shape}")
    return _aggregate(_mismatch_matrix(w[None, :, :], f), alpha)


def relevance_pairs(constraint_batch: np.ndarray, interval_batch: np.ndarray, alpha: float) -> np.ndarray:
    """Row-wise relevance for matched (constraints, intervals) pairs.

    Both inputs are (N, L, 2); row i's constraints meet row i's intervals.
    """
    if alpha == 0:
        raise ValueError("alpha must be non-zero")
    w = np.asarray(constraint_batch, dtype=float)
    f = np.asarray(interval_batch, dtype=float)
    if w.shape != f.shape or w.ndim != 3:
        raise ValueError(f"expected matching (N, L, 2) batches, got {w.shape} and {f.shape}")
    return _aggregate(_mismatch_matrix(w, f), alpha)


def _aggregate(psis: np.ndarray, alpha: float) -> np.ndarray:
    with np.errstate(divide="ignore"):
        vals = np.mean(np.power(psis, alpha), axis=-1) ** (1.0 / alpha)
    return np.minimum(vals, 1.0)
