"""fracp: numerical laboratory for the fractional p-Laplacian.

Solves the nonlocal Dirichlet problem by convex minimization, measures
Holder/Besov regularity of samples through difference quotients, and
verifies the governing exponent formula, tail bounds and the pointwise
inequalities that power them.
"""

__version__ = "0.1.0"

from .grid import FarField, FarFieldGapError, Grid, GridFunction, evaluate, sample_closed_form
from .kernels import BACKEND
from .params import Params, jp, theta_exponent, theta_regime
from .registry import available_expressions, make_expression

__all__ = [
    "BACKEND",
    "FarField",
    "FarFieldGapError",
    "Grid",
    "GridFunction",
    "Params",
    "available_expressions",
    "evaluate",
    "jp",
    "make_expression",
    "sample_closed_form",
    "theta_exponent",
    "theta_regime",
    "__version__",
]
