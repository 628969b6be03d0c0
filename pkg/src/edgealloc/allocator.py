"""The decision engine: per-node ensemble fusion plus one-vs-all voting.

For each node the three trained ensembles produce a yes/no opinion on one
shared feature vector; the opinions fuse under either a conjunctive scheme
(all three must agree) or a majority scheme (at least two).  Voting then
turns the per-node labels into a ranking: a positive node votes for itself,
a negative node votes for everyone else.  Ties resolve by lowest load, then
lowest node id.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from .core import NodeState, Query, build_context_matrix

__all__ = [
    "FusionScheme",
    "EnsembleBundle",
    "AllocationDecision",
    "fuse",
    "fuse_batch",
    "tally_votes",
    "rank_nodes",
    "ova_allocate",
    "select_top_k",
]

# floor applied to measured decision times; protects throughput figures
# against clock resolution
MIN_DECISION_MS = 1e-3


class FusionScheme(str, Enum):
    CS = "cs"  # conjunctive: allocate only on unanimity
    MVS = "mvs"  # majority: allocate on >= 2 of 3

    @classmethod
    def parse(cls, value) -> "FusionScheme":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ValueError(f"unknown fusion scheme {value!r}; expected 'cs' or 'mvs'") from None


@dataclass(frozen=True)
class EnsembleBundle:
    """The three trained ensembles consulted per node."""

    boost: object
    bagging: object
    stacking: object

    def models(self) -> tuple:
        return (self.boost, self.bagging, self.stacking)


def fuse(y1: int, y2: int, y3: int, scheme: FusionScheme) -> int:
    """Fuse three binary opinions into one label."""
    for y in (y1, y2, y3):
        if y not in (0, 1):
            raise ValueError(f"fusion inputs must be binary, got {y!r}")
    scheme = FusionScheme.parse(scheme)
    if scheme is FusionScheme.CS:
        return y1 * y2 * y3
    return 1 if (y1 + y2 + y3) >= 2 else 0


def fuse_batch(labels: np.ndarray, scheme: FusionScheme) -> np.ndarray:
    """Row-wise fusion of an (N, 3) binary label matrix."""
    scheme = FusionScheme.parse(scheme)
    if scheme is FusionScheme.CS:
        return labels.prod(axis=1)
    return (labels.sum(axis=1) >= 2).astype(labels.dtype)


def tally_votes(fused: np.ndarray) -> np.ndarray:
    """Vote counts under one-vs-all voting.

    A node labelled 1 gains one vote; a node labelled 0 gives one vote to
    every node except itself.  Equivalently votes_i = 2*b_i + zeros - 1.
    """
    fused = np.asarray(fused, dtype=int)
    zeros = int((fused == 0).sum())
    return 2 * fused + zeros - 1


def rank_nodes(votes: np.ndarray, loads: np.ndarray, node_ids: np.ndarray) -> np.ndarray:
    """Positions ordered by votes desc, then load asc, then node id asc."""
    return np.lexsort((node_ids, loads, -np.asarray(votes)))


@dataclass(frozen=True)
class AllocationDecision:
    """Outcome of one allocation: fused labels, tallies, ranking and timing."""

    node_ids: np.ndarray
    fused_labels: np.ndarray
    votes: np.ndarray
    loads: np.ndarray
    speeds: np.ndarray
    selected: tuple
    decision_ms: float

    def __post_init__(self) -> None:
        if len(self.selected) == 0:
            raise ValueError("a decision must select at least one node")
        if self.decision_ms < 0:
            raise ValueError("decision time must be >= 0")
        if np.any(self.votes < 0):
            raise ValueError("vote tallies must be >= 0")

    def ranking(self) -> np.ndarray:
        """All node ids in selection order."""
        order = rank_nodes(self.votes, self.loads, self.node_ids)
        return self.node_ids[order]


def _decide(node_ids, fused, loads, speeds, k, started) -> AllocationDecision:
    votes = tally_votes(fused)
    order = rank_nodes(votes, loads, node_ids)
    # the voting rule never leaves every tally at zero for N >= 2, but the
    # ordering above already falls back to lowest load if it ever did
    selected = tuple(int(node_ids[i]) for i in order[:k])
    elapsed_ms = max((time.perf_counter() - started) * 1000.0, MIN_DECISION_MS)
    return AllocationDecision(
        node_ids=np.asarray(node_ids, dtype=int),
        fused_labels=np.asarray(fused, dtype=int),
        votes=votes,
        loads=np.asarray(loads, dtype=float),
        speeds=np.asarray(speeds, dtype=float),
        selected=selected,
        decision_ms=elapsed_ms,
    )


def decide_from_features(
    features: np.ndarray,
    node_ids: np.ndarray,
    loads: np.ndarray,
    speeds: np.ndarray,
    bundle: EnsembleBundle,
    scheme: FusionScheme,
    k: int = 1,
    started: float | None = None,
) -> AllocationDecision:
    """Core decision given a prebuilt (N, 5) feature matrix.

    ``ova_allocate`` and the simulator both route through here so the vote
    logic exists exactly once.
    """
    if started is None:
        started = time.perf_counter()
    labels = np.stack([m.predict_batch(features) for m in bundle.models()], axis=1)
    fused = fuse_batch(labels, scheme)
    return _decide(node_ids, fused, loads, speeds, k, started)


def ova_allocate(
    query: Query,
    nodes: Sequence[NodeState],
    bundle: EnsembleBundle,
    scheme: FusionScheme,
    fcp,
    *,
    alpha: float = 1.0,
    z: float = 1.28,
    k: int = 1,
) -> AllocationDecision:
    """Allocate one query across a node snapshot.

    Builds the per-node context features, applies the three ensembles,
    fuses per node, votes, and returns the decision with wall-clock timing
    over the whole procedure.
    """
    started = time.perf_counter()
    if len(nodes) == 0:
        raise ValueError("node list must be non-empty")
    if not 1 <= k <= len(nodes):
        raise ValueError(f"k must be in [1, {len(nodes)}], got {k}")
    features, _o = build_context_matrix(query, nodes, fcp, alpha, z)
    node_ids = np.array([n.node_id for n in nodes], dtype=int)
    loads = features[:, 3]
    speeds = features[:, 4]
    return decide_from_features(features, node_ids, loads, speeds, bundle, scheme, k, started)


def select_top_k(decision: AllocationDecision, k: int) -> list:
    """The k best node ids by (votes desc, load asc, id asc)."""
    n = len(decision.node_ids)
    if not 1 <= k <= n:
        raise ValueError(f"k must be in [1, {n}], got {k}")
    return [int(i) for i in decision.ranking()[:k]]
