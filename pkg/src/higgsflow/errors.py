"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Input violates a documented precondition."""


class DimensionError(ValidationError):
    """Field shape does not match the lattice or bundle rank."""


class ConditioningError(ArithmeticError):
    """A metric is singular or too close to singular to invert."""


class ContractViolation(RuntimeError):
    """A post-condition or internal invariant failed."""


class UnsupportedExample(ValidationError):
    """Example lies outside the family the stability oracle can decide."""
