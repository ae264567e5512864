"""Linear-quadratic regulator testbed for sample-based actor-critic methods."""

from .env import LqrSystem, RngStream, make_system, validate_system
from .gain import PolicyGain
from .oracle import OracleReport, analytic_report, solve_are

__version__ = "0.1.0"

__all__ = [
    "LqrSystem",
    "OracleReport",
    "PolicyGain",
    "RngStream",
    "analytic_report",
    "make_system",
    "solve_are",
    "validate_system",
]
