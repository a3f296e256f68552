"""Budgeted black-box tuning techniques."""

from .base import (POPULATION, BudgetExceeded, FitnessError, OptimizationPath, Proposal, Trial,
                   Tuner, TunerBudget, TunerError, latin_hypercube, run_tuner)
from .eda import CopulaEDA, eda_generation
from .ga import GeneticAlgorithm, ga_generation, linear_scaling_probabilities
from .irace import IteratedRacing, friedman_survivors
from .pso import ParticleSwarm, pso_step
from .random_search import RandomSearch
from .smbo import ModelBased, expected_improvement

TECHNIQUES = {
    "rs": RandomSearch,
    "ga": GeneticAlgorithm,
    "pso": ParticleSwarm,
    "eda": CopulaEDA,
    "smbo": ModelBased,
    "irace": IteratedRacing,
}

__all__ = ["TECHNIQUES", "run_tuner", "Tuner", "TunerBudget", "TunerError", "BudgetExceeded",
           "FitnessError", "OptimizationPath", "Proposal", "Trial", "POPULATION", "latin_hypercube",
           "RandomSearch", "GeneticAlgorithm", "ParticleSwarm", "CopulaEDA", "ModelBased",
           "IteratedRacing", "ga_generation", "pso_step", "eda_generation", "expected_improvement",
           "friedman_survivors", "linear_scaling_probabilities"]
