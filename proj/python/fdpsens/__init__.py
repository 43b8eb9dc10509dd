"""Sensitivity sets for the false discovery proportion in matched observational studies."""

from fdpsens._core import *  # noqa: F401,F403
from fdpsens._core import __version__  # noqa: F401
