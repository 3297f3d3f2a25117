"""Simulation and analysis toolkit for lattice formation in planar and spatial swarms."""
__version__ = "0.1.0"

from .core import SwarmParams, SwarmState, LinkSet, Framework
from .scenario import ConfigError, SwarmScenario, PopulationScenario, load_scenario, parse_scenario
from .dynamics import simulate, Trajectory
from .metrics import regularity, compactness, steady_state, convergence_times, tuning_cost
from .rigidity import rigidity_matrix, is_infinitesimally_rigid, generate_rigid_lattice
from .stochastic import PTWParams, LevyParams, LightProgram, light_at
from .identification import calibrate_agent, calibrate_population
from .harness import run_trials, grid_search, sweep

__all__ = [
    "SwarmParams", "SwarmState", "LinkSet", "Framework", "ConfigError", "SwarmScenario",
    "PopulationScenario", "load_scenario", "parse_scenario", "simulate", "Trajectory",
    "regularity", "compactness", "steady_state", "convergence_times", "tuning_cost",
    "rigidity_matrix", "is_infinitesimally_rigid", "generate_rigid_lattice", "PTWParams",
    "LevyParams", "LightProgram", "light_at", "calibrate_agent", "calibrate_population",
    "run_trials", "grid_search", "sweep",
]
