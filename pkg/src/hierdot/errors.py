"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Inputs violate a documented precondition."""


class MeshError(ValidationError):
    """A mesh could not be generated or fails its structural invariants."""


class NumericalError(RuntimeError):
    """A numerical step (factorization, solve, line search) failed."""
