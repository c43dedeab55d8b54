"""Exception hierarchy shared by all modules.

The CLI maps these onto exit codes, so every failure a caller can act on
should be one of these rather than a bare ValueError.
"""


class LowLyingError(Exception):
    """Base class for toolkit errors."""


class DomainError(LowLyingError, ValueError):
    """Argument outside the mathematical domain of an operation."""


class PoleError(DomainError):
    """Evaluation requested at a pole."""


class BudgetError(LowLyingError):
    """Request exceeds the configured computational budget."""


class UnstableCountError(LowLyingError):
    """Zero counting did not stabilise under grid refinement."""


class NoWitnessError(LowLyingError):
    """Splitting construction failed to produce a valid witness."""


class NetworkError(LowLyingError):
    """Remote data source unreachable after retries."""


class SchemaError(LowLyingError):
    """Remote payload does not have the expected shape."""


class InvariantError(LowLyingError):
    """Data violates a mathematical invariant and was rejected."""


class InsufficientDataError(LowLyingError):
    """Not enough zeros or coefficients for the requested check."""
