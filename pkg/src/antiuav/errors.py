class InvalidInputError(ValueError):
    """Raised when a value violates a documented precondition or invariant."""


class ContractViolation(RuntimeError):
    """Raised when a component is driven outside its state contract."""


class SpecValidationError(InvalidInputError):
    """Raised when a scenario or experiment description cannot be realised."""
