"""Exception types shared across the package."""

from __future__ import annotations


class EoslabError(Exception):
    """Base class for all errors raised by eoslab."""


class PreconditionError(EoslabError, ValueError):
    """An operation was called outside the region where it is defined."""


class UnsupportedOrderError(EoslabError, ValueError):
    """A derivative order beyond ``max_order`` was requested."""


class NotApplicableError(EoslabError, ValueError):
    """No learning-rate window exists for the requested function/minimum."""


class NoOrbitError(EoslabError, ValueError):
    """The closed-form period-2 orbit does not exist for these parameters."""


class DivergenceError(EoslabError, ArithmeticError):
    """An iterate left the finite (or guarded) region.

    ``trajectory`` holds the partial trajectory up to and including the last
    finite step, ``step`` is that step's index.
    """

    def __init__(self, message, step, last_state, trajectory=None):
        super().__init__(message)
        self.step = step
        self.last_state = last_state
        self.trajectory = trajectory


class NotConvergedError(EoslabError, RuntimeError):
    """An iterative solver ran out of iterations; ``estimate`` is its last value."""

    def __init__(self, message, estimate=None, iters=None):
        super().__init__(message)
        self.estimate = estimate
        self.iters = iters


class ConfigError(EoslabError, ValueError):
    """Invalid experiment configuration. ``location`` names the line or key."""

    def __init__(self, message, location=None):
        if location is not None:
            message = f"{location}: {message}"
        super().__init__(message)
        self.location = location
