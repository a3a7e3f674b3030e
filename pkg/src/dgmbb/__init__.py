"""Distributed gradient methods with Barzilai-Borwein steps and multi-consensus inner loops."""

from .certificates import Certificate, certify, select_c, spectral_radius_3x3
from .graph import Graph, WeightMatrix, generate_erdos_renyi, metropolis_weights, spectral_gap
from .harness import ExperimentPlan, MethodSpec, ProblemSpec, run_experiment, tune_constant_step
from .objective import LeastSquaresInstance, generate_sensing_instance, optimum
from .records import RunRecord
from .solvers import METHODS, SolverConfig, run

__version__ = "0.1.0"

__all__ = [
    "Certificate",
    "ExperimentPlan",
    "Graph",
    "LeastSquaresInstance",
    "METHODS",
    "MethodSpec",
    "ProblemSpec",
    "RunRecord",
    "SolverConfig",
    "WeightMatrix",
    "certify",
    "generate_erdos_renyi",
    "generate_sensing_instance",
    "metropolis_weights",
    "optimum",
    "run",
    "run_experiment",
    "select_c",
    "spectral_gap",
    "spectral_radius_3x3",
    "tune_constant_step",
]
