"""Self-contained nonlinear programming layer: forward-mode derivatives and
an interior-point solver for sparse, structured problems."""

from .ad import (
    Dual,
    Dual2,
    colored_jacobian,
    derivatives,
    greedy_column_groups,
    hessian,
    jacobian,
    seed,
    seed2,
    value_and_grad,
    where,
)
from .ipm import IpmOptions, IpmResult, solve_nlp
from .problem import NlpProblem

__all__ = [
    "Dual",
    "Dual2",
    "IpmOptions",
    "IpmResult",
    "NlpProblem",
    "colored_jacobian",
    "derivatives",
    "greedy_column_groups",
    "hessian",
    "jacobian",
    "seed",
    "seed2",
    "solve_nlp",
    "value_and_grad",
    "where",
]
