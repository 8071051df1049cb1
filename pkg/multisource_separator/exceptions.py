"""
Exception hierarchy for LeakFilter.

The command-line driver maps each family to an exit code:
ConfigError -> 1, AudioIOError -> 2, NumericalError / SpecialFunctionDomainError -> 3.
"""


class SeparatorError(Exception):
    """Base class for errors raised by this package."""


class ConfigError(SeparatorError, ValueError):
    """Invalid configuration, scene description or command-line usage."""


class AudioIOError(SeparatorError, OSError):
    """Missing or unreadable audio file, or incompatible sample rates."""


class NumericalError(SeparatorError, ArithmeticError):
    """Non-finite values appeared in the processing state."""


class SpecialFunctionDomainError(ValueError):
    """Argument outside the supported domain of a special function."""
