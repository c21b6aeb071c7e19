"""Exception hierarchy shared by the planner, executor and CLI."""


class SpttnError(Exception):
    """Base class for all errors raised by this package."""


class KernelParseError(SpttnError, ValueError):
    """The kernel text does not match the grammar."""


class KernelValidationError(SpttnError, ValueError):
    """The kernel parsed but is not a valid SpTTN kernel."""


class TnsParseError(SpttnError, ValueError):
    def __init__(self, message, lineno=None):
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)
        self.lineno = lineno


class BudgetExceededError(SpttnError):
    """Exhaustive enumeration would exceed the configured candidate budget."""


class UnsupportedOrderError(SpttnError, ValueError):
    """A loop order the executor cannot run (sparse indices out of CSF order)."""


class ResourceLimitError(SpttnError):
    """An intermediate buffer would exceed the configured memory limit."""
