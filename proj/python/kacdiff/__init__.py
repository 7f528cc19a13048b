"""Hitting-time moments and regenerative Monte Carlo for one-dimensional diffusions."""

from ._core import *  # noqa: F401,F403
from ._core import __version__  # noqa: F401
