"""Exception types shared across the package."""


class DmlfairError(Exception):
    """Base class for all errors raised by this package."""


class InputError(DmlfairError):
    """Invalid argument values or misused API (bad fold count, empty data, ...)."""


class SchemaMismatchError(DmlfairError):
    """Data does not match the declared or trained-on schema."""


class ParseError(SchemaMismatchError):
    """A cell could not be parsed; carries the offending row and column."""

    def __init__(self, message: str, *, row: int | None = None, column: str | None = None):
        super().__init__(message)
        self.row = row
        self.column = column


class SingularityError(DmlfairError):
    """Rank-deficient design encountered where an exact solve was requested."""
