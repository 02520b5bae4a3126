"""Exact and simulated exit distributions of killed reversible Markov chains."""
from .absorbing import (
    ExitDistribution,
    GreensFunction,
    SubKernel,
    exit_by_time,
    greens_function,
    poisson_kernel,
    poisson_matrix,
    restrict,
)
from .doob import DoobChain, doob_transform, flux_identity_check, poisson_via_doob
from .domain import Domain, build_domain, inner_points, verify_inner_uniform
from .errors import InvariantViolation, NumericalError, RuinkitError, ValidationError
from .graph_core import MarkovKernel, WeightedGraph, build_kernel
from .models import ModelSpec, closed_form_eigen, first_elimination_exact, generate
from .montecarlo import SimConfig, first_elimination, simulate_exits
from .spectral import PerronPair, full_decomposition, perron_pair

__version__ = "0.1.0"

__all__ = [
    "ExitDistribution",
    "GreensFunction",
    "SubKernel",
    "exit_by_time",
    "greens_function",
    "poisson_kernel",
    "poisson_matrix",
    "restrict",
    "DoobChain",
    "doob_transform",
    "flux_identity_check",
    "poisson_via_doob",
    "Domain",
    "build_domain",
    "inner_points",
    "verify_inner_uniform",
    "InvariantViolation",
    "NumericalError",
    "RuinkitError",
    "ValidationError",
    "MarkovKernel",
    "WeightedGraph",
    "build_kernel",
    "ModelSpec",
    "closed_form_eigen",
    "first_elimination_exact",
    "generate",
    "SimConfig",
    "first_elimination",
    "simulate_exits",
    "PerronPair",
    "full_decomposition",
    "perron_pair",
]
