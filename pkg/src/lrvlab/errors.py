"""Exception taxonomy shared across the package.

All exceptions derive from ValueError so callers that only want "bad input"
semantics can catch one base class.
"""


class InvalidInputError(ValueError):
    """Malformed or out-of-domain arguments (shapes, ranges, empty lists)."""


class ModelInvalidError(ValueError):
    """A covariance model violates positive definiteness."""


class BudgetExceededError(ValueError):
    """An eigenvalue budget constraint |lambda| <= c is violated."""


class StructureMismatchError(ValueError):
    """A dense matrix does not conform to the declared cluster structure."""


class FactorizationError(ValueError):
    """A dense matrix expected to be SPD failed its factorization."""


class DegenerateDataError(ValueError):
    """Data admits no well-defined statistic (e.g. zero variance)."""
