"""Dense kernels: parameter vectors, dual numbers, derivatives and linear solvers."""

from datalens.numerics.autodiff import grad, hvp, hvp_fd, hvp_operator
from datalens.numerics.params import LinearOperator, ParamVector, Segment
from datalens.numerics.solvers import (
    SolveResult,
    cg_solve,
    ensure_nonsingular,
    estimate_spectral_radius,
    extreme_eigenvalues,
    lissa_solve,
)

__all__ = [
    "LinearOperator",
    "ParamVector",
    "Segment",
    "SolveResult",
    "cg_solve",
    "ensure_nonsingular",
    "estimate_spectral_radius",
    "extreme_eigenvalues",
    "grad",
    "hvp",
    "hvp_fd",
    "hvp_operator",
    "lissa_solve",
]
