"""scikit-learn style wrappers around expansion building and verification.

``AsymptoticExpansion`` is fitted on a :class:`Problem` and predicts the
truncated sum ``s(t)``; ``DecayVerifier`` runs the residual, error and
parameter diagnostics and exposes them as fitted attributes.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .expansion import ExpansionResult, Problem, build_expansion, residual_series
from .integrate import Table
from .verify import (
    N_WINDOWS,
    T_HI,
    error_check,
    gamma_first_order,
    parameter_count,
    residual,
)


def check_times(t, t_min: float | None = None) -> np.ndarray:
    """Validate sample times as a finite 1-D float array not below ``t_min``."""
    arr = check_array(np.atleast_1d(np.asarray(t, dtype=float)).reshape(-1, 1),
                      ensure_all_finite=True, ensure_min_samples=1)
    arr = arr.ravel()
    if t_min is not None and arr.min() < t_min:
        raise ValueError(f"time {arr.min():.6g} lies before t0 = {t_min:.6g}")
    return arr


def check_problem(problem) -> Problem:
    if not isinstance(problem, Problem):
        raise TypeError(f"expected a Problem, got {type(problem).__name__}")
    return problem


class AsymptoticExpansion(BaseEstimator):
    """Truncated asymptotic sum of a quasilinear system.

    Parameters
    ----------
    k : int
        Number of rank levels to build.

    Attributes
    ----------
    expansion_ : ExpansionResult
    problem_ : Problem
    ranks_ : list of Fraction
    n_features_out_ : int
        State dimension.
    """

    def __init__(self, k: int = 1):
        self.k = k

    def fit(self, problem: Problem, y=None):
        problem = check_problem(problem)
        if not isinstance(self.k, (int, np.integer)) or self.k < 0:
            raise ValueError(f"k must be a nonnegative integer, got {self.k!r}")
        self.problem_ = problem
        self.expansion_ = build_expansion(problem, int(self.k))
        self.ranks_ = list(self.expansion_.ranks)
        self.n_features_out_ = problem.n
        self._s_table = Table.from_series(self.expansion_.series(), problem.n, problem.basis)
        self._g_table = None
        return self

    def predict(self, t) -> np.ndarray:
        """``s(t)`` as an ``(N, n)`` array."""
        check_is_fitted(self, "expansion_")
        return self._s_table(check_times(t, self.problem_.t0))

    def residual(self, t) -> np.ndarray:
        """``g(t)`` from substituting ``s`` into the system."""
        check_is_fitted(self, "expansion_")
        if self._g_table is None:
            g = residual_series(self.problem_, self.expansion_)
            self._g_table = Table.from_series(g, self.problem_.n, self.problem_.basis)
        return self._g_table(check_times(t, self.problem_.t0))


class DecayVerifier(BaseEstimator):
    """Residual and error decay checks for a fitted expansion.

    Parameters
    ----------
    k : int
        Truncation to verify.
    mode : {"npi", "simple"}
    varpi : float, optional
        Integrability exponent (simple mode).
    display_k : int, optional
        Shorter truncation to measure the error against.
    t_max : float
    rtol : float
    launch_times : tuple of float, optional
    n_windows : int
    """

    def __init__(self, k: int = 1, mode: str = "npi", varpi=None, display_k=None,
                 t_max: float = T_HI, rtol: float = 1e-10, launch_times=None,
                 n_windows: int = N_WINDOWS):
        self.k = k
        self.mode = mode
        self.varpi = varpi
        self.display_k = display_k
        self.t_max = t_max
        self.rtol = rtol
        self.launch_times = launch_times
        self.n_windows = n_windows

    def fit(self, problem: Problem, expansion: ExpansionResult | None = None):
        problem = check_problem(problem)
        if expansion is None:
            expansion = build_expansion(problem, int(self.k))
        self.expansion_ = expansion
        self.residual_ = residual(problem, expansion, self.k, n_windows=self.n_windows)
        self.error_ = error_check(problem, expansion, self.k, self.mode, self.varpi,
                                  self.display_k, self.launch_times, self.t_max, self.rtol,
                                  n_windows=self.n_windows)
        try:
            self.gamma_ = gamma_first_order(problem, expansion)
        except ValueError:
            self.gamma_ = None
        self.parameters_ = parameter_count(problem, self.gamma_, self.mode, expansion, self.k,
                                           self.varpi)
        return self

    @property
    def passed_(self) -> bool:
        check_is_fitted(self, "error_")
        return bool(self.residual_.report.passed and self.error_.passed)

    def score(self, problem=None, y=None) -> float:
        """Fraction of decay checks that pass."""
        check_is_fitted(self, "error_")
        checks = [self.residual_.report.passed] + [r.passed for r in self.error_.reports]
        return float(np.mean(checks))
