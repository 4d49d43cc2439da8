"""
Exception hierarchy shared by every module.
"""

from typing import Optional


class ChannelInclusionError(Exception):
    """Root of all errors raised by this package."""


# --- Channel validation ---

class ChannelValidationError(ChannelInclusionError, ValueError):
    """Raw matrix cannot be turned into a DMC."""


class NegativeEntryError(ChannelValidationError):
    pass


class RowSumError(ChannelValidationError):
    pass


class EmptyMatrixError(ChannelValidationError):
    pass


# --- Shapes and sizes ---

class ShapeMismatchError(ChannelInclusionError, ValueError):
    pass


class SizeOverflowError(ChannelInclusionError, ValueError):
    """A Kronecker power or lifted certificate would be too large to allocate."""


class SizeLimitError(ChannelInclusionError, ValueError):
    """An enumeration exceeds its configured cap."""


class OutOfRangeError(ChannelInclusionError, ValueError):
    pass


class IndexOutOfRangeError(ChannelInclusionError, IndexError):
    pass


# --- Structural preconditions ---

class NotDoublyStochasticError(ChannelInclusionError, ValueError):
    pass


class NotCirculantError(ChannelInclusionError, ValueError):
    pass


class NotSymmetricError(ChannelInclusionError, ValueError):
    pass


class UnsupportedSizeError(ChannelInclusionError, ValueError):
    pass


class NoCirculantFormError(ChannelInclusionError, ValueError):
    pass


# --- Numerical procedures ---

class NoConvergenceError(ChannelInclusionError, RuntimeError):
    def __init__(self, message: str, iterations: int = 0, gap: float = float('nan')):
        super().__init__(message)
        self.iterations = iterations
        self.gap = gap


class InfeasibleError(ChannelInclusionError, RuntimeError):
    pass


class UnboundedError(ChannelInclusionError, RuntimeError):
    pass


class IterationLimitError(ChannelInclusionError, RuntimeError):
    def __init__(self, message: str, iterations: int = 0):
        super().__init__(message)
        self.iterations = iterations


class RankDeficientError(ChannelInclusionError, ValueError):
    pass


# --- I/O ---

class ParseError(ChannelInclusionError, ValueError):
    def __init__(self, message: str, path: Optional[str] = None, line: Optional[int] = None):
        location = ""
        if path is not None:
            location = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(f"{location}{message}")
        self.path = path
        self.line = line


class CacheFormatError(ChannelInclusionError, ValueError):
    pass
