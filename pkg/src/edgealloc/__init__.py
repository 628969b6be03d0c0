"""Query-to-edge-node allocation: decision engine, simulator and benchmarks.

The pipeline matches incoming analytics queries with simulated edge nodes:
a complexity score and per-node data relevance feed three trained ensembles
whose fused opinions drive a one-vs-all vote over the nodes.
"""

from .allocator import (
    AllocationDecision,
    EnsembleBundle,
    FusionScheme,
    fuse,
    ova_allocate,
    select_top_k,
)
from .complexity import (
    ComplexityClass,
    ComplexityClassifier,
    ComplexityParams,
    ComplexityVector,
    TrainingQueryCorpus,
    classify_complexity,
)
from .core import (
    ContextVector,
    DatasetDigest,
    NodeState,
    Query,
    QueryConstraints,
    TrainingTuple,
    build_context_vectors,
)
from .relevance import IntervalVector, confidence_intervals, overlap_mismatch, relevance
from .simulator import (
    LabelingPolicy,
    Scenario,
    ScenarioConfig,
    generate_scenario,
    simulate_run,
    synthesize_training_set,
)

__version__ = "0.1.0"

__all__ = [
    "AllocationDecision",
    "EnsembleBundle",
    "FusionScheme",
    "fuse",
    "ova_allocate",
    "select_top_k",
    "ComplexityClass",
    "ComplexityClassifier",
    "ComplexityParams",
    "ComplexityVector",
    "TrainingQueryCorpus",
    "classify_complexity",
    "ContextVector",
    "DatasetDigest",
    "NodeState",
    "Query",
    "QueryConstraints",
    "TrainingTuple",
    "build_context_vectors",
    "IntervalVector",
    "confidence_intervals",
    "overlap_mismatch",
    "relevance",
    "LabelingPolicy",
    "Scenario",
    "ScenarioConfig",
    "generate_scenario",
    "simulate_run",
    "synthesize_training_set",
]
