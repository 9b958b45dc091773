"""Asymptotic expansions for quasilinear ODE systems with oscillating data.

The solution of ``y' = A y + f(t) + sum_l eps_l(t) f_l(t, y)`` is expanded
in products of the vanishing parameters ``eps_l`` and their derivatives,
with coefficients drawn from exact classes of exponential sums.
"""

from .estimator import AsymptoticExpansion, DecayVerifier, check_times
from .expansion import (
    ExpansionResult,
    FormalSeries,
    PolyNonlinearity,
    Problem,
    build_expansion,
    residual_series,
    taylor_coefficient,
    truncated_sum,
)
from .integrate import Trajectory, integrate
from .osc import (
    GeneratorBasis,
    OscFn,
    OscMatrix,
    OscVector,
    ResonanceError,
    differentiate,
    evaluate,
    mean_value,
    ring_ops,
    separation_check,
    solve_scalar_linear,
    solve_system_linear,
)
from .problem_io import ProblemFormatError, load_problem, parse_problem, serialize_problem
from .ranks import (
    EpsSpec,
    NuMonomial,
    enumerate_ranks,
    monomial_derivative,
    monomial_evaluate,
    monomials_of_rank,
    rank_of,
)
from .verify import (
    DecayReport,
    GammaDiagnostics,
    error_check,
    fit_decay,
    gamma_first_order,
    parameter_count,
    residual,
)

__version__ = "0.1.0"

__all__ = [
    "AsymptoticExpansion",
    "DecayReport",
    "DecayVerifier",
    "EpsSpec",
    "ExpansionResult",
    "FormalSeries",
    "GammaDiagnostics",
    "GeneratorBasis",
    "NuMonomial",
    "OscFn",
    "OscMatrix",
    "OscVector",
    "PolyNonlinearity",
    "Problem",
    "ProblemFormatError",
    "ResonanceError",
    "Trajectory",
    "build_expansion",
    "check_times",
    "differentiate",
    "enumerate_ranks",
    "error_check",
    "evaluate",
    "fit_decay",
    "gamma_first_order",
    "integrate",
    "load_problem",
    "mean_value",
    "monomial_derivative",
    "monomial_evaluate",
    "monomials_of_rank",
    "parameter_count",
    "parse_problem",
    "rank_of",
    "residual",
    "residual_series",
    "ring_ops",
    "separation_check",
    "serialize_problem",
    "solve_scalar_linear",
    "solve_system_linear",
    "taylor_coefficient",
    "truncated_sum",
]
