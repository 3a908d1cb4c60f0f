"""Projected Nesterov proximal-gradient reconstruction toolkit."""

from .models import GaussianLinear, PoissonIdentity, PoissonLogConcentrated
from .operators import LinearOperator, MatrixOperator
from .prox import (Box, IsotropicTV, L1Analysis, NonnegativeOrthant, Regularizer,
                   WholeSpace)
from .solver import (ContinuationConfig, SolverConfig, continuation_solve, npgs_solve,
                     pnpg_solve)

__version__ = "0.1.0"
