"""Exception types shared across the package."""


class HypermixError(Exception):
    """Base class for all package errors."""


class ContractError(HypermixError, ValueError):
    """An argument violates a documented precondition (shape, finiteness)."""


class DomainError(HypermixError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class PrecisionLossError(HypermixError, ArithmeticError):
    """A closed-form evaluation would be dominated by cancellation error."""


class SamplingError(HypermixError, RuntimeError):
    """The rejection sampler failed to produce a draw within its budget."""
