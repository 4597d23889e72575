"""Gauged dual-primal tearing solver for time-domain eddy currents.

Spline edge elements on box multipatch geometries, tree-cotree gauging of
the insulating region, implicit Euler in time and a manufactured-solution
harness for convergence studies.
"""
from .errors import (
    ConfigurationError,
    ConstructionError,
    ConvergenceError,
    InputError,
    NonsingularityError,
)
from .timestep import ErrorReport, consistent_initial, discretize, march, observed_order

__version__ = "0.1.0"

__all__ = [
    "ConfigurationError",
    "ConstructionError",
    "ConvergenceError",
    "InputError",
    "NonsingularityError",
    "ErrorReport",
    "consistent_initial",
    "discretize",
    "march",
    "observed_order",
]
