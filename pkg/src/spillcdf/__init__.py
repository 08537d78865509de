"""Exact joint CDFs of selected order statistics via the spilling dynamic program."""

from .baselines import brute_force, monte_carlo, solve_boncelet
from .dependent import (
    DependencySchedule,
    MarkovChain,
    MicroBinSpec,
    boundary_sets,
    enumerate_paths_oracle,
    markov_chain_adapter,
    solve_dependent,
    solve_markov_chain,
)
from .distributions import DiscreteAtoms, Empirical, Exponential, Gaussian, Uniform
from .errors import (
    InvalidDistributionError,
    NumericalCheckError,
    QueryRangeError,
    QueryValidationError,
    ResourceLimitError,
    SpillCdfError,
)
from .query import OrderQuery, bin_probabilities, compute_deltas, validate_and_canonicalize
from .spill import SpillTable, sigma, solve_independent, spill_step, spill_transform

__all__ = [
    "DependencySchedule", "DiscreteAtoms", "Empirical", "Exponential", "Gaussian",
    "InvalidDistributionError", "MarkovChain", "MicroBinSpec", "NumericalCheckError",
    "OrderQuery", "QueryRangeError", "QueryValidationError", "ResourceLimitError",
    "SpillCdfError", "SpillTable", "Uniform", "bin_probabilities", "boundary_sets",
    "brute_force", "compute_deltas", "enumerate_paths_oracle", "markov_chain_adapter",
    "monte_carlo", "sigma", "solve_boncelet", "solve_dependent", "solve_independent",
    "solve_markov_chain", "spill_step", "spill_transform", "validate_and_canonicalize",
]
