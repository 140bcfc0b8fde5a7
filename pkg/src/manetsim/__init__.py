"""Discrete-event MANET simulator with a multi-cross-layer (MCBA) protocol stack
and a plain AODV baseline."""

from .metrics import MetricsReport, write_csv
from .network import Simulation, simulate
from .scenario import ScenarioConfig, ScenarioError, load_scenario, parse_scenario

__all__ = ["MetricsReport", "ScenarioConfig", "ScenarioError", "Simulation", "load_scenario",
           "parse_scenario", "simulate", "write_csv"]
__version__ = "0.1.0"
