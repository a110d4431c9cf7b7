"""Exact virtual machine consolidation: compact MILP models, knapsack-hull
cuts and a cut-and-solve driver."""

from .cns import SolveResult, SolverOptions, SolveStatus, solve_cns
from .formulation import (
    MixedIntegerProgram, build_extended, build_mazumdar, build_model, build_proposed,
    build_speitkamp, model_statistics,
)
from .generator import GenParams, generate, generate_basic, generate_extended
from .milp import MilpResult, MilpStatus, brute_force_optimum, solve_milp
from .model import (
    Extensions, Instance, Solution, check_feasibility, evaluate_objective, exhaustive_optimum,
    make_instance, validate_instance,
)

__version__ = "0.1.0"

__all__ = [
    "SolveResult", "SolverOptions", "SolveStatus", "solve_cns", "MixedIntegerProgram",
    "build_extended", "build_mazumdar", "build_model", "build_proposed", "build_speitkamp",
    "model_statistics", "GenParams", "generate", "generate_basic", "generate_extended",
    "MilpResult", "MilpStatus", "brute_force_optimum", "solve_milp", "Extensions", "Instance",
    "Solution", "check_feasibility", "evaluate_objective", "exhaustive_optimum", "make_instance",
    "validate_instance",
]
