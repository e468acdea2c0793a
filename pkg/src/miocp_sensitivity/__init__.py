"""Lipschitz sensitivity of mixed-integer optimal control value functions."""

__version__ = "0.1.0"

from .control_space import IntegerControlPath, OrdinaryControlPath  # noqa: E402
from .dynamics import TimeGrid  # noqa: E402
from .instances import make_custom_linear, make_example1, make_heat_actuator  # noqa: E402
from .solver import EnumerationCaps, InnerSolveSettings, inner_solve, solve_value  # noqa: E402

__all__ = [
    "__version__",
    "EnumerationCaps",
    "InnerSolveSettings",
    "IntegerControlPath",
    "OrdinaryControlPath",
    "TimeGrid",
    "inner_solve",
    "make_custom_linear",
    "make_example1",
    "make_heat_actuator",
    "solve_value",
]
