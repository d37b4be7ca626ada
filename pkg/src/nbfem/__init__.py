"""Narrow-band unfitted finite elements for Laplace-Beltrami problems on closed surfaces."""

from .errors import (ConfigError, EmptyBand, NbfemError, NotConverged, OutsideBand,  # noqa: F401
                     ResourceLimit)
from .experiments import PRESETS, get_preset  # noqa: F401
from .levelset import Circle, CoefficientMode, Sphere, Torus  # noqa: F401
from .solver import RunConfig, run_convergence, solve_level  # noqa: F401

__version__ = "0.1.0"
