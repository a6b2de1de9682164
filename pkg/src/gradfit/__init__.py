"""Gradient-enhanced least-squares polynomial surrogates."""

from .basis import BasisFamily, DomainBox, TensorBasis, deriv_1d, eval_1d, eval_multi, grad_multi
from .errors import (
    ConvergenceError,
    ContractError,
    DegeneracyError,
    EvaluationError,
    ExprSyntaxError,
    FactorizationError,
    GradfitError,
    ParameterError,
    TruncationError,
)
from .gels import (
    GradSamples,
    GradSystem,
    Surrogate,
    assemble,
    fit,
    fit_samples,
    numeric_rank,
    rel_l2_error,
    select_points,
    solve_lsq,
)
from .indexset import MultiIndexSet, count_total_degree, hyperbolic_set
from .sampling import PointSet, lhs, maxvol, maxvol_select, uniform_random
from .stats import EmpiricalCdf, InputDistribution, monte_carlo, pce_mean, pce_std, surrogate_cdf

__version__ = "0.1.0"
