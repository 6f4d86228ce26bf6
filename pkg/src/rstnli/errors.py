"""Exception taxonomy shared across the package.

Error categories map onto CLI exit codes: usage problems exit 2 (argparse),
DataError exits 3, NumericError exits 4.
"""


class RstNliError(Exception):
    """Base class for all package errors."""


class DataError(RstNliError):
    """Malformed or invariant-violating input data."""


class ParseError(DataError):
    """A record could not be decoded at all (bad syntax, bad container)."""


class ValidationError(DataError):
    """A decoded record violates a documented invariant."""


class ShapeError(RstNliError):
    """Array shapes incompatible with the requested operation."""


class NumericError(RstNliError):
    """Non-finite values or other numeric failure during computation."""


class ContractError(RstNliError):
    """An operation was called outside its documented preconditions."""
