"""Intent-indexed agentic memory engine.

Ingests goal-oriented trajectories step by step, annotates each step with a
structured contextual cue (thematic scope, event type, key entity types),
rewrites ambiguous references, and retrieves history by cue compatibility
under a fixed token budget. Ships with a deterministic synthetic-benchmark
generator and an evaluation harness.
"""

from .builder import IngestSession, IngestionConfig, ingest_trajectory
from .embedding import EmbeddingIndex, HashEmbedder, cosine
from .gateway import Gateway, GatewayConfig, ModelResult, ModelTask, build_gateway
from .model import (
    ContextualIntent,
    EvaluationQuestion,
    FilterConfig,
    LabelVocabulary,
    MemorySnippet,
    ScopeState,
    SymbolicOperation,
    TrajectoryStep,
    validate_trajectory,
)
from .retrieval import (
    RankedSnippet,
    RetrievalConfig,
    answer_query,
    assemble_context,
    derive_filter_config,
    label_density,
    rank_snippets,
)
from .store import StoreView, StoreWriter, load_view

__version__ = "0.1.0"

__all__ = [
    "ContextualIntent",
    "EmbeddingIndex",
    "EvaluationQuestion",
    "FilterConfig",
    "Gateway",
    "GatewayConfig",
    "HashEmbedder",
    "IngestSession",
    "IngestionConfig",
    "LabelVocabulary",
    "MemorySnippet",
    "ModelResult",
    "ModelTask",
    "RankedSnippet",
    "RetrievalConfig",
    "ScopeState",
    "StoreView",
    "StoreWriter",
    "SymbolicOperation",
    "TrajectoryStep",
    "answer_query",
    "assemble_context",
    "build_gateway",
    "cosine",
    "derive_filter_config",
    "ingest_trajectory",
    "label_density",
    "load_view",
    "rank_snippets",
    "validate_trajectory",
]
