"""Optimal switching under drift ambiguity via discrete reflected BSDE systems."""

from .ambiguity import AmbiguityModel, HamiltonianResult, hamiltonian, hstar
from .evaluator import EvalReport, PathSample, evaluate_exact, evaluate_mc, simulate_path
from .expr import evaluate, parse, to_string
from .lattice import FactorModel, Lattice, build_lattice, controlled_up_probability
from .oracle import OracleResult, enumerate_policies, game_dp
from .problem import ProblemSpec, ValidationReport, dump_spec, load_spec, validate
from .solver import SolutionField, reflect_layer, solve_direct, solve_picard
from .strategy import (
    ControlTable,
    Policy,
    SwitchingStrategy,
    extract_policy,
    random_control,
    random_policy,
    realize_strategy,
    worst_control,
)

__version__ = "0.1.0"
