"""Exchange-rate speculation and balance-of-payments constrained growth as a discrete map."""

__version__ = "0.1.0"

from .core import MarketState, ModelParams, ParameterError, gamma, step
from .equilibria import Equilibrium, jacobian_at, stability
from .simulate import Trajectory, aggregate

__all__ = [
    "Equilibrium",
    "MarketState",
    "ModelParams",
    "ParameterError",
    "Trajectory",
    "aggregate",
    "gamma",
    "jacobian_at",
    "stability",
    "step",
]
