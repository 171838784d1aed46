"""Consensus under multiplicative measurement noise: gain certification and Monte Carlo simulation."""

from .dynamics import BACKEND, SimulationError, SimulationParams, SwitchingSchedule, simulate_ensemble, simulate_path
from .graph import Digraph, NoiseProfile
from .scenario import Scenario, load_scenario

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "Digraph",
    "NoiseProfile",
    "Scenario",
    "SimulationError",
    "SimulationParams",
    "SwitchingSchedule",
    "load_scenario",
    "simulate_ensemble",
    "simulate_path",
]
