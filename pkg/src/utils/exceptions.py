"""Exception hierarchy shared by every module of the package."""

from collections.abc import Sequence


class TrimixError(ValueError):
    """Base class for all errors raised by the package."""


class DomainError(TrimixError):
    """A value lies outside the mean or linear-predictor domain of a family."""


class ValidationError(TrimixError):
    """Inputs violate a documented precondition."""


class ContractViolation(TrimixError):
    """An internal operation was called outside its contract."""


class SingularCoreError(TrimixError):
    """The L x L Woodbury core matrix could not be factorized."""


class StaleCacheError(TrimixError):
    """A precision cache was used after the state it was built from changed."""


class RankDeficiencyError(TrimixError):
    """A design matrix handed to a least-squares solve lacks full column rank."""

    def __init__(self, message: str, columns: Sequence[str] = ()) -> None:
        """Store the names of the columns found to be linearly dependent."""
        self.columns = tuple(columns)
        if self.columns:
            message = f"{message} (offending columns: {', '.join(self.columns)})"
        super().__init__(message)


class ConstantColumnError(TrimixError):
    """A column that must vary is constant."""

    def __init__(self, column: str) -> None:
        """Record the constant column."""
        self.column = column
        super().__init__(f"Column '{column}' is constant")


class NoEventsError(TrimixError):
    """Survival data contains no observed events."""


class ParseError(TrimixError):
    """A CSV cell could not be parsed as a finite number."""

    def __init__(
        self, message: str, row: int | None = None, column: str | None = None
    ) -> None:
        """Attach the 1-based file row and the column name of the bad cell."""
        self.row = row
        self.column = column
        if row is not None and column is not None:
            message = f"{message} at row {row}, column '{column}'"
        super().__init__(message)


class SchemaError(TrimixError):
    """A schema and a data file disagree."""
