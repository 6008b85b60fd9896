"""Variational EM inference for stochastic and latent block models."""
from .errors import (BlockInferError, CovariateSymmetryWarning, DegenerateClass,
                     DegenerateClassWarning, DomainViolation, FitInfeasible, InputError, InvalidK,
                     OutOfRangeWarning, ParseError, ShapeMismatch, SymmetryViolation)
from .explore import (ExplorationState, ExploreConfig, compute_icl, explore, filter_candidates,
                      merge_candidates, split_candidates)
from .families import FAMILY_IDS, EmissionParams, free_parameter_count, get_family
from .graph_data import Kind, NetworkData, NetworkStructure, dyad_count, load_network
from .membership import Membership
from .simulate import benchmark_suite, simulate, simulate_network
from .spectral import initial_membership, residual_graph, spectral_clustering_abs
from .vem import EMConfig, FitResult, compute_J, e_step, fit, m_step_alpha

__version__ = "0.1.0"

__all__ = [
    "BlockInferError", "InputError", "ParseError", "ShapeMismatch", "DomainViolation",
    "SymmetryViolation", "InvalidK", "DegenerateClass", "FitInfeasible",
    "DegenerateClassWarning", "OutOfRangeWarning", "CovariateSymmetryWarning",
    "ExplorationState", "ExploreConfig", "compute_icl", "explore", "filter_candidates",
    "merge_candidates", "split_candidates", "FAMILY_IDS", "EmissionParams",
    "free_parameter_count", "get_family", "Kind", "NetworkData", "NetworkStructure",
    "dyad_count", "load_network", "Membership", "benchmark_suite", "simulate",
    "simulate_network", "initial_membership", "residual_graph", "spectral_clustering_abs",
    "EMConfig", "FitResult", "compute_J", "e_step", "fit", "m_step_alpha",
]
