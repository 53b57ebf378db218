"""Dispatch engine for a distribution-level energy, water and hydrogen nexus."""

from .acivp import Predictor, Strategy, extract_strategy, featurize, predict, solve_with_acivp, train
from .assembly import assemble, objective_value
from .bnb import enumerate_binaries, solve_micp
from .model import Network, Scenario, SystemState, load_network, read_scenario_csv
from .program import ConicProgram, ProgramBuilder, restrict
from .rolling import RollingConfig, generate_training_data, report, run_rolling
from .solver import Solution, SolverConfig, get_active_set, solve_continuous

__version__ = "0.1.0"

__all__ = [
    "ConicProgram", "Network", "Predictor", "ProgramBuilder", "RollingConfig", "Scenario", "Solution",
    "SolverConfig", "Strategy", "SystemState", "assemble", "enumerate_binaries", "extract_strategy", "featurize",
    "generate_training_data", "get_active_set", "load_network", "objective_value", "predict",
    "read_scenario_csv", "report", "restrict", "run_rolling", "solve_continuous", "solve_micp",
    "solve_with_acivp", "train",
]
