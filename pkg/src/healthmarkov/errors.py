"""Exception types shared across the package."""


class HealthMarkovError(Exception):
    """Base class for every error raised by this package."""


class InvalidInputError(HealthMarkovError, ValueError):
    """An operation received a value outside its documented domain."""


class ConfigError(HealthMarkovError, ValueError):
    """A run configuration or threshold setup is inconsistent."""


class DataFormatError(HealthMarkovError):
    """Input data violates the documented file format or record constraints."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class DuplicateRecordError(DataFormatError):
    """The same (person, year, month) or (person, year) appeared twice."""


class EmptyCohortError(HealthMarkovError):
    """A query selected no observations."""


class UnsupportedCellError(HealthMarkovError):
    """A computation needs a cell that has no estimation support."""


class HorizonError(UnsupportedCellError):
    """A forecast or projection stepped past the last estimated age."""


class DegenerateFitError(HealthMarkovError):
    """A regression design matrix is rank deficient."""
