"""Bayesian optimization over mixed continuous/integer domains.

Integer-valued inputs are handled in one of three ways: ``naive``
(optimize the relaxation, round, store the rounded point), ``basic``
(round only when calling the objective) and ``proposed`` (also round the
kernel inputs so the surrogate is constant between integers).
"""

from .acquisition import AcquisitionContext, Strategy, expected_improvement
from .driver import BoConfig, TrialRecord, recommend, run_bo, suggest_next
from .gp import Dataset, GpPosterior, fit, log_marginal_likelihood
from .kernel import KernelConfig, KernelFamily
from .space import SearchSpace, Variable

__all__ = [
    "AcquisitionContext",
    "BoConfig",
    "Dataset",
    "GpPosterior",
    "KernelConfig",
    "KernelFamily",
    "SearchSpace",
    "Strategy",
    "TrialRecord",
    "Variable",
    "expected_improvement",
    "fit",
    "log_marginal_likelihood",
    "recommend",
    "run_bo",
    "suggest_next",
]
