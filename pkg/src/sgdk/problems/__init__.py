"""Nonconvex test families: quadratic-circle sums and Styblinski-Tang sums."""

from .base import MixtureProblem, QuadraticMixture
from .qc import QcComponent, QcSumsModel, generate_qc_models, qc_eval_grad_hess
from .st import StComponent, StSumsModel, generate_st_models, st_eval_grad_hess, st_minimizers

__all__ = [
    "MixtureProblem",
    "QuadraticMixture",
    "QcComponent",
    "QcSumsModel",
    "generate_qc_models",
    "qc_eval_grad_hess",
    "StComponent",
    "StSumsModel",
    "generate_st_models",
    "st_eval_grad_hess",
    "st_minimizers",
]
