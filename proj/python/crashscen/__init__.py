"""Crash sequence scenario mining."""

from ._crashscen import (
    ConfigError,
    DataError,
    Error,
    NumericError,
    align_cost,
    distance_matrix,
    hill_climb,
    k_medoids,
    k_sweep,
    parse_sequence,
    pipeline_stages,
    quality_indices,
    query,
    run_all,
    run_stage,
    score,
)

__all__ = [
    "ConfigError",
    "DataError",
    "Error",
    "NumericError",
    "align_cost",
    "distance_matrix",
    "hill_climb",
    "k_medoids",
    "k_sweep",
    "parse_sequence",
    "pipeline_stages",
    "quality_indices",
    "query",
    "run_all",
    "run_stage",
    "score",
]
