"""Friction estimation and compensation for simulated robot manipulators.

Rigid-body dynamics with a linear regressor, a Stribeck friction model
linear in its parameters, Fourier excitation design, adaptive and
observer-based controllers, a closed-loop simulator and evaluation tools.
"""

from .dynamics import ManipulatorModel
from .errors import ConfigError, DomainError, EstimationError, InfeasibleError, SimulationFault
from .friction import FrictionModel, FrictionParams
from .simloop import SimConfig, SimTrace, run_closed_loop
from .trajectory import FourierTrajectory

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "DomainError", "EstimationError", "FourierTrajectory", "FrictionModel",
    "FrictionParams", "InfeasibleError", "ManipulatorModel", "SimConfig", "SimTrace",
    "SimulationFault", "run_closed_loop",
]
