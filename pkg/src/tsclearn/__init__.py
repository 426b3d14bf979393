"""Targeted supervised contrastive learning for long-tailed data."""

from .errors import ContractError, DegenerateError, NotReadyError, OptimizationError, TSCError, ValidationError

__version__ = "0.1.0"

__all__ = [
    "ContractError",
    "DegenerateError",
    "NotReadyError",
    "OptimizationError",
    "TSCError",
    "ValidationError",
]
