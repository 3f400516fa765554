"""Exception types shared across the package."""
from __future__ import annotations


class NumericsError(RuntimeError):
    """A numerical procedure produced an unusable result."""


class MarginError(NumericsError):
    """The free boundary ran out of grid; the pre-sized margin is exhausted."""


class ConvergenceError(NumericsError):
    """An iterative solve failed to reach its tolerance."""


class ConfigError(ValueError):
    """A scenario config is malformed; the message names the field path."""


class CoverageError(ValueError):
    """A tabulated profile was evaluated outside its covered range."""
