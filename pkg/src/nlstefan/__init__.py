"""Nonlocal one-phase Stefan problems on the line and in radial symmetry.

The model couples a density u evolving by a convolution diffusion operator
L u = J*u - u with a habitat whose edge moves at the rate mass crosses it.
This package provides the marching solver for the four habitat layouts
(whole line with one free edge, compact habitat with two edges, half line
with a constant exterior datum, radial ball), the corrector profiles and
constants entering the long-time asymptotics, rate/limit diagnostics, and
an independent fixed-point oracle used to cross-check the marching path.
"""

__version__ = "0.1.0"

from .errors import ConfigError, ConvergenceError, MarginError, NumericsError

__all__ = [
    "__version__",
    "ConfigError",
    "ConvergenceError",
    "MarginError",
    "NumericsError",
]
