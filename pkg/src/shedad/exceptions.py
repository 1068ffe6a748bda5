"""Exception hierarchy; the CLI maps these onto exit codes."""


class ShedadError(Exception):
    """Base class for all package errors."""


class ConfigError(ShedadError, ValueError):
    """Invalid parameter or configuration value."""


class DataError(ShedadError, ValueError):
    """Input data is malformed or unusable."""


class SchemaError(DataError):
    """CSV header does not match the expected column map."""


class ParseError(DataError):
    """A CSV row could not be parsed; ``line`` is 1-based and counts the header."""

    def __init__(self, message, line=None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line
