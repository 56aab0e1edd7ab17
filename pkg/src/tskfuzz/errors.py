"""Exception types shared across the library.

The CLI maps these onto exit codes: user/configuration problems exit 1,
numeric failures exit 2.
"""


class TskError(Exception):
    """Base class for all library errors."""


class ParseError(TskError):
    """A data file could not be parsed (malformed row, empty file, ...)."""


class SchemaError(TskError):
    """A data file parsed but violated the expected schema (e.g. non-integer label)."""


class ConfigError(TskError):
    """Invalid or inconsistent configuration (bad fractions, shape mismatch, ...)."""


class DegenerateInputError(TskError):
    """An input is degenerate for the requested operation (e.g. zero-norm vector)."""


class NumericError(TskError):
    """A computation produced non-finite values."""
