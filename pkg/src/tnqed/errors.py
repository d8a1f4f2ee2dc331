"""Error types shared by all modules."""


class ValidationError(ValueError):
    """Bad input: shapes, grids, non-Hermitian matrices, malformed configs."""


class NumericalFailure(RuntimeError):
    """A computation ran but its result cannot be trusted (aliasing, singular toy, ...)."""
