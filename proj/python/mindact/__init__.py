"""Python bindings for the mindact C++ core."""

from ._mindact import (
    BoundingBox,
    ConfigError,
    DomNode,
    DomTree,
    Error,
    IngestError,
    IoError,
    NotFoundError,
    PredictionError,
    PruneStats,
    acceptable_set,
    lexical_score,
    operation_f1,
    parse_model_answer,
    parse_snapshot,
    prune,
    rankable_nodes,
    represent_element,
    run_command,
    top_k,
)

__all__ = [
    "BoundingBox",
    "ConfigError",
    "DomNode",
    "DomTree",
    "Error",
    "IngestError",
    "IoError",
    "NotFoundError",
    "PredictionError",
    "PruneStats",
    "acceptable_set",
    "lexical_score",
    "operation_f1",
    "parse_model_answer",
    "parse_snapshot",
    "prune",
    "rankable_nodes",
    "represent_element",
    "run_command",
    "top_k",
]
