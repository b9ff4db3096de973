"""Simulation and mean-field analysis of the BDY dollar-exchange game with a
wealth floor ``a`` and a wealth cap ``b``."""

from .core import (
    INFINITE,
    EquilibriumDist,
    ModelParams,
    ProbMass,
    Rates,
    delta,
    make_prob_mass,
    replica_rng,
    validate_params,
)
from .equilibrium import equilibrium_distribution, solve_common_ratio
from .meanfield import apply_generator_D, apply_L, apply_R, rates, rk4_integrate

__all__ = [
    "INFINITE",
    "EquilibriumDist",
    "ModelParams",
    "ProbMass",
    "Rates",
    "apply_L",
    "apply_R",
    "apply_generator_D",
    "delta",
    "equilibrium_distribution",
    "make_prob_mass",
    "rates",
    "replica_rng",
    "rk4_integrate",
    "solve_common_ratio",
    "validate_params",
]
