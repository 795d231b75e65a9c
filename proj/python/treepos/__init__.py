"""Python bindings for the treepos C++ library."""

from ._treepos import (
    ConfigError,
    Encoder,
    Error,
    IoError,
    ParseError,
    SchemaError,
    Vocab,
    compute_metrics,
    count_extra_params,
    depth_probe,
    gen_corpus,
    normalized_depths,
    parse,
    pca_2d,
    positions,
    positions_from_json,
)

__all__ = [
    "ConfigError",
    "Encoder",
    "Error",
    "IoError",
    "ParseError",
    "SchemaError",
    "Vocab",
    "compute_metrics",
    "count_extra_params",
    "depth_probe",
    "gen_corpus",
    "normalized_depths",
    "parse",
    "pca_2d",
    "positions",
    "positions_from_json",
]
