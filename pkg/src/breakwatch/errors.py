"""Exception types shared across the package."""


class BreakwatchError(Exception):
    """Base class for errors raised by this package."""


class DegreesOfFreedomError(BreakwatchError, ValueError):
    """History window too short for the number of model coefficients."""


class RankDeficiencyError(BreakwatchError):
    """History design is numerically rank deficient; no usable mapping matrix."""


class ZeroResidualError(BreakwatchError):
    """A series fits its history model exactly, leaving no residual scale."""


class AllNanSeriesError(BreakwatchError):
    """A series contains no finite values."""


class StackFormatError(BreakwatchError):
    """Malformed, truncated, or unsupported binary stack payload."""


class StackCapacityError(StackFormatError):
    """Declared stack dimensions exceed what this process will address."""


class CsvParseError(BreakwatchError):
    """Unparseable text input; carries the 1-based offending line number."""

    def __init__(self, message: str, line_number: int):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number
