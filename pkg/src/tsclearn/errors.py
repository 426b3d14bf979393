"""Exception hierarchy shared by every module."""


class TSCError(Exception):
    """Base class for all errors raised by tsclearn."""


class ValidationError(TSCError, ValueError):
    """Inputs violate a precondition (shape, range, norm)."""


class OptimizationError(TSCError, RuntimeError):
    """A numerical procedure diverged or hit a degenerate state."""


class DegenerateError(OptimizationError):
    """A vector that must be normalized has (near) zero length."""


class ContractError(TSCError, RuntimeError):
    """A caller broke a stateful contract (e.g. missing assignment)."""


class NotReadyError(ContractError):
    """Center tracker is not fully initialized yet."""
