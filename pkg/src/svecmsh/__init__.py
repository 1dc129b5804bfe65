"""Bayesian two-state Markov-switching heteroskedastic structural VEC models."""
from .model import (
    Dataset,
    FreeEntryMap,
    ModelParameters,
    build_free_entry_map,
    deterministic_terms,
    log_likelihood,
    long_run_matrix,
    partition_by_state,
    reduced_form_covariance,
)
from .priors import HyperParameters, default_hyperparameters
from .sampler import ChainConfig, DrawStore, SweepError, run_chain
from .identification import StructuralSolution, alternate_solutions, check_theorem_conditions
from .simulation import DgpSpec, builtin_dgps, simulate

__version__ = "0.1.0"
