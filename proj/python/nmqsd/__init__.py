"""Python access to the nmqsd trajectory simulator and reference solvers."""

from ._core import (
    Error,
    NumericError,
    RunConfig,
    ValidationError,
    alpha,
    basis_counts,
    list_models,
    load_config,
    parse_config,
    reference,
    simulate,
    von_neumann_entropy,
)

__all__ = [
    "Error",
    "NumericError",
    "RunConfig",
    "ValidationError",
    "alpha",
    "basis_counts",
    "list_models",
    "load_config",
    "parse_config",
    "reference",
    "simulate",
    "von_neumann_entropy",
]
