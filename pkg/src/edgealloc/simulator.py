"""Workload simulation: scenarios, traces, training data and the run loop.

A scenario bundles N simulated nodes (each with its own dataset digest and
speed), a stream of analytics queries, and one load value per node per
epoch.  Loads either replay a synthetic or ingested utilisation trace
(default) or evolve from queue arrivals and completions.  Everything is
reproducible from (config, seed): each component draws from its own child
stream, and query generation is independent of N so sweeps over the node
count face the same workload.
"""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.special import ndtr

from .allocator import AllocationDecision, EnsembleBundle, FusionScheme, decide_from_features, select_top_k
from .complexity import ComplexityClassifier, TrainingQueryCorpus, DEFAULT_CLASSES
from .core import DatasetDigest, NodeState, Query, QueryConstraints, complexity_scalar
from .errors import ConfigError, DataError
from .learners import LabeledDataset
from .metrics import QueryRecord, RunResult
from .relevance import relevance_batch, relevance_pairs

__all__ = [
    "ScenarioConfig",
    "LabelingPolicy",
    "Scenario",
    "generate_scenario",
    "generate_query_corpus",
    "statement_for_class",
    "generate_utilization_trace",
    "ingest_utilization_trace",
    "apply_allocation",
    "synthesize_training_set",
    "simulate_run",
    "save_scenario",
    "load_scenario",
    "SCENARIO_SCHEMA_VERSION",
]

SCENARIO_SCHEMA_VERSION = 1

log = logging.getLogger(__name__)

# child-stream tags so each scenario component has its own substream
_NODE_STREAM = 1
_QUERY_STREAM = 2
_TRAINING_STREAM = 3

_DISTRIBUTIONS = ("uniform", "gaussian")
_LOAD_MODES = ("trace_replay", "queue_dynamics")


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything needed to regenerate a scenario deterministically."""

    n_nodes: int = 10
    dims: int = 5
    n_queries: int = 1000
    distribution: str = "uniform"
    deadline_max: float = 10.0
    z: float = 1.28
    alpha: float = 1.0
    seed: int = 0
    queue_capacity: int = 100
    digest_sample_size: int = 1000  # points sampled to estimate digest means/spreads
    digest_cardinality: int = 10_000_000  # reported dataset size (full stream count)
    data_window: float = 0.25  # half-width of each node's per-dimension data range
    gaussian_sd: float = 0.15
    load_speed_corr: float = 0.15  # capacity-proportional admission: fast nodes run hotter
    service_rate: float = 5.0
    load_mode: str = "trace_replay"
    trace_path: Optional[str] = None
    trace_column: Optional[str] = None

    def __post_init__(self) -> None:
        if self.n_nodes < 1 or self.dims < 1 or self.n_queries < 1:
            raise ConfigError("n_nodes, dims and n_queries must all be >= 1")
        if self.deadline_max <= 0:
            raise ConfigError("deadline_max must be positive")
        if self.distribution not in _DISTRIBUTIONS:
            raise ConfigError(f"distribution must be one of {_DISTRIBUTIONS}")
        if self.load_mode not in _LOAD_MODES:
            raise ConfigError(f"load_mode must be one of {_LOAD_MODES}")
        if self.z <= 0:
            raise ConfigError("z must be positive")
        if self.alpha == 0:
            raise ConfigError("alpha must be non-zero")
        if self.queue_capacity < 1 or self.digest_sample_size < 1:
            raise ConfigError("queue_capacity and digest_sample_size must be >= 1")
        if self.digest_cardinality < 1:
            raise ConfigError("digest_cardinality must be >= 1")
        if not -1.0 < self.load_speed_corr < 1.0:
            raise ConfigError("load_speed_corr must be in (-1, 1)")


@dataclass(frozen=True)
class LabelingPolicy:
    """Synthetic ground truth for training labels.

    A (query, node) context earns the allocate label when the node's data
    mismatch is at most ``max_relevance``, its load is at most ``max_load``
    and its speed is at least ``min_speed``.
    """

    max_relevance: float = 0.5
    max_load: float = 0.5
    min_speed: float = 0.5

    def __post_init__(self) -> None:
        for name in ("max_relevance", "max_load", "min_speed"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name} must be in [0, 1], got {v}")

    def label(self, relevance, load, speed):
        return (
            (np.asarray(relevance) <= self.max_relevance)
            & (np.asarray(load) <= self.max_load)
            & (np.asarray(speed) >= self.min_speed)
        ).astype(int)


@dataclass
class Scenario:
    """Generated nodes, query stream and per-epoch load series."""

    config: ScenarioConfig
    nodes: list  # list[NodeState]
    queries: list  # list[Query]
    load_series: np.ndarray  # (epochs, N); replayed cyclically

    def loads_at(self, epoch: int) -> np.ndarray:
        return self.load_series[epoch % self.load_series.shape[0]]

    def node_arrays(self) -> dict:
        n = len(self.nodes)
        dims = self.config.dims
        means = np.empty((n, dims))
        spreads = np.empty((n, dims))
        cards = np.empty(n, dtype=int)
        for i, node in enumerate(self.nodes):
            means[i] = node.digest.means
            spreads[i] = node.digest.spreads
            cards[i] = node.digest.cardinality
        return {
            "ids": np.array([node.node_id for node in self.nodes], dtype=int),
            "speeds": np.array([node.speed for node in self.nodes]),
            "means": means,
            "spreads": spreads,
            "cards": cards,
        }


# ---------------------------------------------------------------------------
# statement templates
#
# One skeleton per complexity class; statements within a class differ only in
# one numeric literal, so token similarity is high inside a class and low
# across classes.  Class rank grows with the work implied by the statement
# (sort < scan < join is deliberate: the sort skeleton touches one indexed
# column, the scan filters three, the join multiplies two tables).
# ---------------------------------------------------------------------------

_TEMPLATES = {
    0: (
        "SELECT account, balance FROM ledger WHERE balance <= {n} "
        "ORDER BY balance DESC LIMIT 50"
    ),
    1: (
        "SELECT name, price, volume FROM stocks WHERE price >= {n} "
        "AND volume >= 250 AND region = 'euro'"
    ),
    2: (
        "SELECT orders.id, users.name FROM orders JOIN users ON orders.uid = users.id "
        "WHERE orders.total >= {n} AND users.city = 'rome'"
    ),
}


def statement_for_class(class_id: int, literal: int) -> str:
    """Instantiate the statement skeleton of one complexity class."""
    try:
        template = _TEMPLATES[class_id]
    except KeyError:
        raise ValueError(f"no statement template for class id {class_id}") from None
    return template.format(n=literal)


def generate_query_corpus(
    per_class: int = 30, literal_start: int = 101
) -> TrainingQueryCorpus:
    """Labelled statement corpus: ``per_class`` entries per class, each with a
    distinct numeric literal."""
    if per_class < 1:
        raise ValueError("per_class must be >= 1")
    entries = []
    for class_id in sorted(_TEMPLATES):
        for j in range(per_class):
            entries.append((statement_for_class(class_id, literal_start + j), class_id))
    return TrainingQueryCorpus(entries, DEFAULT_CLASSES)


# ---------------------------------------------------------------------------
# scenario generation
# ---------------------------------------------------------------------------


def _draw_centers(rng: np.random.Generator, cfg: ScenarioConfig, shape) -> np.ndarray:
    """Per-dimension data centers; nodes differ so relevance can discriminate."""
    if cfg.distribution == "uniform":
        return rng.uniform(0.0, 1.0, size=shape)
    return np.clip(rng.normal(0.5, cfg.gaussian_sd, size=shape), 0.0, 1.0)


def _draw_values_around(
    rng: np.random.Generator, cfg: ScenarioConfig, centers: np.ndarray, sample_size: int
) -> np.ndarray:
    """Dataset points around given centers; shape (*centers.shape, sample_size)."""
    shape = centers.shape + (sample_size,)
    c = centers[..., None]
    if cfg.distribution == "uniform":
        lo = np.maximum(c - cfg.data_window, 0.0)
        hi = np.minimum(c + cfg.data_window, 1.0)
        return rng.uniform(lo, hi, size=shape)
    return np.clip(rng.normal(c, cfg.gaussian_sd, size=shape), 0.0, 1.0)


def _draw_unit(rng: np.random.Generator, cfg: ScenarioConfig, size) -> np.ndarray:
    if cfg.distribution == "uniform":
        return rng.uniform(0.0, 1.0, size=size)
    return np.clip(rng.normal(0.5, cfg.gaussian_sd, size=size), 0.0, 1.0)


def _speed_from_latent(latent: np.ndarray, cfg: ScenarioConfig) -> np.ndarray:
    # raw speeds live on (0, 10]; normalising by the maximum keeps s in (0, 1]
    if cfg.distribution == "uniform":
        raw = 10.0 * ndtr(latent)
    else:
        raw = np.clip(5.0 + 10.0 * cfg.gaussian_sd * latent, 0.0, 10.0)
    return np.clip(raw, 1e-9, 10.0) / 10.0


def _load_from_latent(latent: np.ndarray, cfg: ScenarioConfig) -> np.ndarray:
    if cfg.distribution == "uniform":
        return ndtr(latent)
    return np.clip(0.5 + cfg.gaussian_sd * latent, 0.0, 1.0)


def _coupled_load_latent(
    rng: np.random.Generator, cfg: ScenarioConfig, speed_latent, size
) -> np.ndarray:
    """Latent load draws tied to the node's speed latent.

    The correlation models capacity-proportional admission (fast nodes are
    handed proportionally more work); marginals stay exactly as configured.
    """
    rho = cfg.load_speed_corr
    return rho * speed_latent + np.sqrt(1.0 - rho * rho) * rng.normal(size=size)


def _digest_from_sample(sample: np.ndarray, cardinality: int) -> DatasetDigest:
    return DatasetDigest(
        means=sample.mean(axis=-1),
        spreads=sample.std(axis=-1),
        cardinality=cardinality,
    )


def _build_node(cfg: ScenarioConfig, index: int) -> tuple:
    """One node from its own child stream, so node i is identical for any N."""
    rng = np.random.default_rng([cfg.seed, _NODE_STREAM, index])
    centers = _draw_centers(rng, cfg, cfg.dims)
    sample = _draw_values_around(rng, cfg, centers, cfg.digest_sample_size)
    digest = _digest_from_sample(sample, cfg.digest_cardinality)
    speed_latent = rng.normal()
    speed = float(_speed_from_latent(np.asarray(speed_latent), cfg))
    loads = _load_from_latent(_coupled_load_latent(rng, cfg, speed_latent, cfg.n_queries), cfg)
    return digest, speed, loads


def _generate_queries(cfg: ScenarioConfig) -> list:
    rng = np.random.default_rng([cfg.seed, _QUERY_STREAM])
    class_ids = rng.integers(0, len(_TEMPLATES), size=cfg.n_queries)
    literals = rng.integers(1000, 10000, size=cfg.n_queries)
    deadlines = rng.uniform(0.0, cfg.deadline_max, size=cfg.n_queries)
    bounds = np.sort(_draw_unit(rng, cfg, (cfg.n_queries, cfg.dims, 2)), axis=2)
    queries = []
    for t in range(cfg.n_queries):
        queries.append(
            Query(
                id=f"q{t:05d}",
                statement=statement_for_class(int(class_ids[t]), int(literals[t])),
                constraints=QueryConstraints(bounds[t]),
                deadline=float(deadlines[t]),
            )
        )
    return queries


def generate_scenario(cfg: ScenarioConfig) -> Scenario:
    """Build nodes, query stream and load series for one configuration.

    Queries draw from a stream keyed only by the seed, so configurations
    differing in N share the same workload.  With a trace configured the
    load series comes from the file (round-robin across nodes) instead of
    the synthetic distribution.
    """
    if cfg.trace_path is not None:
        per_node = ingest_utilization_trace(cfg.trace_path, cfg.n_nodes, cfg.trace_column)
        epochs = min(len(s) for s in per_node)
        load_series = np.stack([s[:epochs] for s in per_node], axis=1)
    else:
        load_series = np.empty((cfg.n_queries, cfg.n_nodes))

    nodes = []
    for i in range(cfg.n_nodes):
        digest, speed, loads = _build_node(cfg, i)
        if cfg.trace_path is None:
            load_series[:, i] = loads
        nodes.append(
            NodeState(
                node_id=i,
                load=float(load_series[0, i]),
                speed=speed,
                digest=digest,
                queue_capacity=cfg.queue_capacity,
            )
        )
    return Scenario(config=cfg, nodes=nodes, queries=_generate_queries(cfg), load_series=load_series)


# ---------------------------------------------------------------------------
# scenario dump / reload
# ---------------------------------------------------------------------------


def save_scenario(path, scenario: Scenario) -> None:
    """Dump a scenario to versioned JSON; byte-identical for a fixed seed."""
    import json
    from dataclasses import asdict

    payload = {
        "schema_version": SCENARIO_SCHEMA_VERSION,
        "config": asdict(scenario.config),
        "nodes": [
            {
                "node_id": node.node_id,
                "load": node.load,
                "speed": node.speed,
                "queue_capacity": node.queue_capacity,
                "digest": {
                    "means": node.digest.means.tolist(),
                    "spreads": node.digest.spreads.tolist(),
                    "cardinality": node.digest.cardinality,
                },
            }
            for node in scenario.nodes
        ],
        "queries": [
            {
                "id": q.id,
                "statement": q.statement,
                "constraints": q.constraints.intervals.tolist(),
                "deadline": q.deadline,
            }
            for q in scenario.queries
        ],
        "load_series": scenario.load_series.tolist(),
    }
    Path(path).write_text(json.dumps(payload, sort_keys=True), encoding="utf-8")


def load_scenario(path) -> Scenario:
    import json

    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read scenario {path}: {exc}") from exc
    version = payload.get("schema_version")
    if version != SCENARIO_SCHEMA_VERSION:
        raise DataError(f"scenario {path} has schema version {version}, expected {SCENARIO_SCHEMA_VERSION}")
    cfg = ScenarioConfig(**payload["config"])
    nodes = [
        NodeState(
            node_id=n["node_id"],
            load=n["load"],
            speed=n["speed"],
            queue_capacity=n.get("queue_capacity", cfg.queue_capacity),
            digest=DatasetDigest(
                means=np.asarray(n["digest"]["means"], dtype=float),
                spreads=np.asarray(n["digest"]["spreads"], dtype=float),
                cardinality=n["digest"]["cardinality"],
            ),
        )
        for n in payload["nodes"]
    ]
    queries = [
        Query(
            id=q["id"],
            statement=q["statement"],
            constraints=QueryConstraints(np.asarray(q["constraints"], dtype=float)),
            deadline=q["deadline"],
        )
        for q in payload["queries"]
    ]
    return Scenario(
        config=cfg,
        nodes=nodes,
        queries=queries,
        load_series=np.asarray(payload["load_series"], dtype=float),
    )


# ---------------------------------------------------------------------------
# utilisation traces
# ---------------------------------------------------------------------------


def generate_utilization_trace(
    path, rows: int = 60000, seed: int = 0, column: str = "cpu_util"
) -> Path:
    """Write a synthetic processor-utilisation trace (percent units).

    The series drifts slowly (long sine period plus a tight AR(1) wiggle),
    mimicking how real utilisation evolves; consecutive samples stay close,
    so a round-robin split leaves nodes with similar loads at each epoch.
    """
    rng = np.random.default_rng([seed, 0x7ACE])
    t = np.arange(rows)
    base = 35.0 + 18.0 * np.sin(2.0 * np.pi * t / 45000.0)
    noise = np.empty(rows)
    state = 0.0
    shocks = rng.normal(0.0, 0.3, size=rows)
    for i in range(rows):
        state = 0.9 * state + shocks[i]
        noise[i] = state
    values = np.clip(base + noise, 1.0, 99.0)
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", column])
        for i, v in enumerate(values):
            writer.writerow([i, f"{v:.4f}"])
    return path


def ingest_utilization_trace(path, n_nodes: int, column: Optional[str] = None) -> list:
    """Read a delimited utilisation trace and split it round-robin over nodes.

    The file needs a header; ``column`` picks the utilisation column by name
    (default: the second column).  Values above 1 anywhere mark the column
    as percentages and the whole series is divided by 100; everything is
    clamped to [0, 1].  Node i receives values[i::n_nodes], replayed
    cyclically when the simulation outlasts the series.
    """
    if n_nodes < 1:
        raise ValueError("n_nodes must be >= 1")
    values = []
    try:
        fh = open(path, "r", encoding="utf-8", newline="")
    except OSError as exc:
        raise DataError(f"cannot open trace {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: trace file is empty") from None
        header = [h.strip() for h in header]
        if column is None:
            if len(header) < 2:
                raise DataError(f"{path}: no utilisation column found in header {header}")
            col_idx = 1
        else:
            try:
                col_idx = header.index(column)
            except ValueError:
                raise DataError(f"{path}: missing column {column!r} in header {header}") from None
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if col_idx >= len(row):
                raise DataError(f"{path}:{lineno}: row has no column {col_idx + 1}")
            try:
                values.append(float(row[col_idx]))
            except ValueError:
                raise DataError(
                    f"{path}:{lineno}: cannot parse utilisation value {row[col_idx]!r}"
                ) from None
    if len(values) < n_nodes:
        raise DataError(f"{path}: trace has {len(values)} rows, need at least {n_nodes}")
    arr = np.asarray(values, dtype=float)
    if np.any(arr < 0):
        raise DataError(f"{path}: utilisation values must be non-negative")
    if arr.max() > 1.0:
        arr = arr / 100.0
    arr = np.clip(arr, 0.0, 1.0)
    return [arr[i::n_nodes] for i in range(n_nodes)]


# ---------------------------------------------------------------------------
# queue dynamics
# ---------------------------------------------------------------------------


def apply_allocation(
    nodes: Sequence[NodeState],
    decision: AllocationDecision,
    k: int = 1,
    service_rate: float = 5.0,
    query_id: Optional[str] = None,
) -> None:
    """Advance one epoch of queue dynamics in place.

    The k selected nodes each enqueue the query (arrivals beyond capacity
    are dropped, load saturates at 1), then every node completes
    floor(speed * service_rate) queued queries.
    """
    by_id = {node.node_id: node for node in nodes}
    for node_id in select_top_k(decision, k):
        node = by_id[node_id]
        if len(node.queue) < node.queue_capacity:
            node.queue.append(query_id if query_id is not None else f"anon-{node_id}")
    for node in nodes:
        completed = int(np.floor(node.speed * service_rate))
        for _ in range(min(completed, len(node.queue))):
            node.queue.popleft()
        node.sync_load_from_queue()


# ---------------------------------------------------------------------------
# training data synthesis
# ---------------------------------------------------------------------------

_TRAINING_CHUNK = 512  # rows per digest-sampling block; fixed so draws are stable


def synthesize_training_set(
    scenario: Scenario, policy: LabelingPolicy, size: int
) -> LabeledDataset:
    """Labelled context vectors drawn from the scenario's generative law.

    Each row pairs a fresh query constraint vector with a fresh virtual
    node (digest, load, speed) drawn exactly the way the scenario draws
    them, so the feature distribution matches what the allocator sees at
    decision time.  Complexity and deadline carry no label signal and are
    sampled uniformly over their ranges.
    """
    if size < 1:
        raise ValueError("size must be >= 1")
    cfg = scenario.config
    rng = np.random.default_rng([cfg.seed, _TRAINING_STREAM])

    speed_latents = rng.normal(size=size)
    speeds = _speed_from_latent(speed_latents, cfg)
    if cfg.trace_path is not None:
        loads = rng.choice(scenario.load_series.ravel(), size=size)
    else:
        loads = _load_from_latent(_coupled_load_latent(rng, cfg, speed_latents, size), cfg)
    complexity = np.clip(rng.uniform(0.0, 1.0, size=size), 1e-9, 1.0)
    deadlines = rng.uniform(0.0, cfg.deadline_max, size=size)
    bounds = np.sort(_draw_unit(rng, cfg, (size, cfg.dims, 2)), axis=2)

    relevances = np.empty(size)
    for start in range(0, size, _TRAINING_CHUNK):
        stop = min(start + _TRAINING_CHUNK, size)
        count = stop - start
        centers = _draw_centers(rng, cfg, (count, cfg.dims))
        samples = _draw_values_around(rng, cfg, centers, cfg.digest_sample_size)
        means = samples.mean(axis=-1)
        spreads = samples.std(axis=-1)
        half = cfg.z * spreads / cfg.digest_cardinality
        ci = np.stack([means - half, means + half], axis=-1)
        relevances[start:stop] = relevance_pairs(bounds[start:stop], ci, cfg.alpha)

    labels = policy.label(relevances, loads, speeds)
    positives = int(labels.sum())
    if positives == 0 or positives == size:
        ratio = positives / size
        raise DataError(
            f"labeling policy {policy} produced a single-class training set "
            f"(positive ratio {ratio:.4f}); adjust the policy thresholds"
        )
    log.info(
        "training set: %d rows, %.1f%% positive (policy %s)",
        size,
        100.0 * positives / size,
        policy,
    )
    features = np.column_stack([complexity, deadlines, relevances, loads, speeds])
    return LabeledDataset(features, labels)


# ---------------------------------------------------------------------------
# simulation loop
# ---------------------------------------------------------------------------


def simulate_run(
    scenario: Scenario,
    bundle: EnsembleBundle,
    scheme: FusionScheme,
    classifier: ComplexityClassifier,
    k: int = 1,
) -> RunResult:
    """Allocate every query of the scenario in order and record the metrics.

    Under trace replay the per-epoch loads come from the load series; under
    queue dynamics they evolve from arrivals and completions.  Deterministic
    apart from the measured decision times.
    """
    cfg = scenario.config
    scheme = FusionScheme.parse(scheme)
    arrays = scenario.node_arrays()
    half = cfg.z * arrays["spreads"] / arrays["cards"][:, None]
    cis = np.stack([arrays["means"] - half, arrays["means"] + half], axis=-1)
    speeds = arrays["speeds"]
    ids = arrays["ids"]
    pos_of = {int(node_id): pos for pos, node_id in enumerate(ids)}
    n = len(ids)
    replay = cfg.load_mode == "trace_replay"
    if not replay:
        for node in scenario.nodes:
            node.queue.clear()
            node.sync_load_from_queue()

    result = RunResult(
        scheme=scheme.value,
        distribution=cfg.distribution if cfg.trace_path is None else "trace",
        n_nodes=cfg.n_nodes,
        seed=cfg.seed,
        meta={"dims": cfg.dims, "alpha": cfg.alpha, "z": cfg.z, "k": k},
    )
    features = np.empty((n, 5))
    for t, query in enumerate(scenario.queries):
        if replay:
            loads = scenario.loads_at(t)
        else:
            loads = np.array([node.load for node in scenario.nodes])

        started = time.perf_counter()
        vector, _ = classifier.classify_statement(query.statement)
        features[:, 0] = complexity_scalar(vector)
        features[:, 1] = query.deadline
        features[:, 2] = relevance_batch(query.constraints, cis, cfg.alpha)
        features[:, 3] = loads
        features[:, 4] = speeds
        decision = decide_from_features(
            features, ids, loads, speeds, bundle, scheme, k=k, started=started
        )

        chosen = pos_of[decision.selected[0]]
        result.records.append(
            QueryRecord(
                query_index=t,
                decision_ms=decision.decision_ms,
                selected_node=int(ids[chosen]),
                load_selected=float(loads[chosen]),
                speed_selected=float(speeds[chosen]),
                load_min=float(loads.min()),
                speed_max=float(speeds.max()),
            )
        )
        if not replay:
            apply_allocation(
                scenario.nodes, decision, k=k, service_rate=cfg.service_rate, query_id=query.id
            )
    return result
