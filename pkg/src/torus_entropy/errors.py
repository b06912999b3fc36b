"""Exception hierarchy shared by every module."""


class TorusEntropyError(Exception):
    """Base class for all package errors."""


class ConfigurationError(TorusEntropyError, ValueError):
    """A configuration violates a documented constraint."""


class DomainError(TorusEntropyError, ValueError):
    """An argument lies outside the domain of an operation."""


class RangeError(TorusEntropyError, ValueError):
    """A requested depth, mode or horizon exceeds what is available."""


class ResourceError(TorusEntropyError, RuntimeError):
    """An enumeration would exceed its configured cap."""


class HyperbolicityError(TorusEntropyError, ValueError):
    """The map failed a hyperbolicity test."""


class NumericError(TorusEntropyError, RuntimeError):
    """A numerical routine failed to meet its residual target."""


class NeedsMoreSymbols(TorusEntropyError, ValueError):
    """A finite symbol window was too short.

    ``deficit`` is the number of extra symbols required (a lower bound when
    the exact count cannot be known without the missing symbols).
    """

    def __init__(self, deficit, message=None):
        self.deficit = int(deficit)
        super().__init__(message or f"needs at least {self.deficit} more symbol(s)")
