"""Exception hierarchy shared across the toolkit.

The CLI maps these onto exit codes: usage errors exit 1, data errors
exit 2, numeric failures exit 3.
"""


class ToolkitError(Exception):
    """Base class for all toolkit errors."""


class UsageError(ToolkitError):
    """Invokation errors: bad flags, unknown subcommands."""


class DataError(ToolkitError):
    """Malformed or inconsistent input data."""


class ValidationError(DataError):
    """An argument or object violates a documented invariant."""


class ParseError(DataError):
    """A file could not be parsed; message carries the location."""


class NumericError(ToolkitError):
    """A numeric operation failed or produced unusable results."""


class CapacityError(NumericError):
    """Neighbor pairs exceeded the fixed capacity.

    Carries the count that would have been needed so callers can
    rebuild with a larger allocation.
    """

    def __init__(self, required: int, capacity: int):
        self.required = int(required)
        self.capacity = int(capacity)
        super().__init__(
            f"neighbor list overflow: {required} pairs found, capacity is "
            f"{capacity}; rebuild with capacity >= {required}"
        )


class DivergenceError(NumericError):
    """Training produced a non-finite loss."""
