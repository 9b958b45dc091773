"""Numerical certification of residual and error decay, and first-order
parameter diagnostics.

Decay claims ``||x(t)|| = O(eps_1(t)**q)`` are checked by :func:`fit_decay`:
samples are grouped into logarithmically spaced windows, the window maxima
are fitted against ``eps_1`` on a log-log scale, and the normalized maxima
``||x|| / eps_1**q`` must not grow by more than a fixed ratio.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np
from scipy import integrate as sp_integrate

from .expansion import (
    ExpansionResult,
    Problem,
    jacobian_at,
    residual_series,
    series_derivative,
)
from .integrate import Table, Trajectory, compile_error_field, integrate_field
from .osc import OscMatrix
from .ranks import EpsSpec

SLOPE_TOL = 0.15
RATIO_TOL = 1.25
N_WINDOWS = 12
PER_WINDOW = 1000
T_LO, T_HI = 1e2, 1e5
DIVERGENCE_LEVEL = 50.0
EIG_SEPARATION = 1e-8
P0_COND_MAX = 1e12


class SpectrumError(ValueError):
    """The spectrum of ``A`` violates a precondition of the requested mode."""


# sampling and fitting -----------------------------------------------------------------

def window_edges(t_lo: float, t_hi: float, n_windows: int = N_WINDOWS) -> np.ndarray:
    if not 0 < t_lo < t_hi:
        raise ValueError("need 0 < t_lo < t_hi")
    return np.geomspace(t_lo, t_hi, n_windows + 1)


def sample_times(t_lo: float = T_LO, t_hi: float = T_HI, n_windows: int = N_WINDOWS,
                 per_window: int = PER_WINDOW) -> np.ndarray:
    """Uniform samples inside each of ``n_windows`` geometric windows."""
    edges = window_edges(t_lo, t_hi, n_windows)
    parts = [np.linspace(a, b, per_window) for a, b in zip(edges[:-1], edges[1:])]
    return np.unique(np.concatenate(parts))


@dataclass(frozen=True)
class DecayReport:
    """Outcome of a decay fit against ``eps_1**q``.

    Attributes
    ----------
    q : float
        Claimed exponent.
    slope : float
        Least-squares slope of ``log max ||x||`` against ``log eps_1`` over
        the windows; ``inf`` when every sample is zero.
    sup : float
        Largest windowed sup of ``||x|| / eps_1**q``.
    window_t, window_sup, window_normalized : ndarray
        Per window: time of the maximum, the maximum, and the sup of the
        normalized values.
    """

    q: float
    slope: float
    sup: float
    slope_ok: bool
    trend_ok: bool
    window_t: np.ndarray = field(repr=False)
    window_sup: np.ndarray = field(repr=False)
    window_normalized: np.ndarray = field(repr=False)
    slope_tol: float = SLOPE_TOL
    ratio_tol: float = RATIO_TOL
    label: str = ""

    @property
    def passed(self) -> bool:
        return self.slope_ok and self.trend_ok

    @property
    def worst_growth(self) -> float:
        """Largest ratio of a normalized window sup to the smallest earlier one."""
        return _worst_growth(self.window_normalized)

    def summary(self) -> dict:
        return {
            "label": self.label,
            "q": self.q,
            "slope": self.slope,
            "sup": self.sup,
            "worst_growth": self.worst_growth,
            "slope_ok": self.slope_ok,
            "trend_ok": self.trend_ok,
            "passed": self.passed,
        }


def _worst_growth(w: np.ndarray) -> float:
    if w.size < 2:
        return 0.0
    floor = np.minimum.accumulate(w)[:-1]
    later = w[1:]
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where(floor > 0, later / floor, np.where(later > 0, np.inf, 0.0))
    return float(r.max())


def fit_decay(t, values, eps1: EpsSpec, q, n_windows: int = N_WINDOWS,
              slope_tol: float = SLOPE_TOL, ratio_tol: float = RATIO_TOL,
              label: str = "") -> DecayReport:
    """Fit sampled magnitudes against ``eps1(t)**q``.

    Parameters
    ----------
    t : array_like
        Sample times, strictly increasing.
    values : array_like
        Nonnegative magnitudes (norms are taken row-wise for 2-D input).
    eps1 : EpsSpec
        The leading small parameter.
    q : float or Fraction
        Claimed decay exponent.
    n_windows : int
        Number of geometric windows between the first and last sample (at
        least 8, each must contain a sample).

    Returns
    -------
    DecayReport
        Passes iff the slope is at least ``q - slope_tol`` and no
        normalized window sup exceeds ``ratio_tol`` times an earlier one.
    """
    t = np.asarray(t, dtype=float)
    v = np.asarray(values, dtype=float)
    if v.ndim == 2:
        v = np.linalg.norm(v, axis=1)
    if t.ndim != 1 or t.shape != v.shape:
        raise ValueError("t and values must be matching 1-D arrays")
    if n_windows < 8:
        raise ValueError("at least 8 windows are required")
    if t.size < n_windows or np.any(np.diff(t) <= 0):
        raise ValueError("sample times must be strictly increasing and cover every window")
    if not np.all(np.isfinite(v)):
        raise ValueError("non-finite sample values")
    v = np.abs(v)
    q = float(q)
    e = np.asarray(eps1(t), dtype=float)
    if np.any(e <= 0):
        raise ValueError("eps_1 must be positive on the samples")
    edges = window_edges(t[0], t[-1], n_windows)
    idx = np.clip(np.searchsorted(edges, t, side="right") - 1, 0, n_windows - 1)
    wt = np.empty(n_windows)
    ws = np.empty(n_windows)
    wn = np.empty(n_windows)
    we = np.empty(n_windows)
    normalized = v / e ** q
    for w in range(n_windows):
        sel = np.flatnonzero(idx == w)
        if sel.size == 0:
            raise ValueError(f"window {w} contains no samples")
        i = sel[np.argmax(v[sel])]
        wt[w], ws[w], we[w] = t[i], v[i], e[i]
        wn[w] = normalized[sel].max()
    if not np.any(ws > 0):
        return DecayReport(q, float("inf"), 0.0, True, True, wt, ws, wn, slope_tol, ratio_tol,
                           label)
    pos = ws > 0
    if pos.sum() >= 2:
        slope = float(np.polyfit(np.log(we[pos]), np.log(ws[pos]), 1)[0])
    else:
        slope = float("inf")
    trend_ok = _worst_growth(wn) <= ratio_tol
    return DecayReport(q, slope, float(wn.max()), slope >= q - slope_tol, trend_ok, wt, ws, wn,
                       slope_tol, ratio_tol, label)


# residual --------------------------------------------------------------------------------

def _truncation(e: ExpansionResult, k: int | None) -> int:
    k = e.k if k is None else int(k)
    if not 0 <= k <= e.k:
        raise ValueError(f"truncation {k} outside 0..{e.k}")
    return k


def claimed_exponent(e: ExpansionResult, k: int) -> Fraction:
    """``rho_{k+1} / varrho_1``."""
    return Fraction(e.rank(k + 1)) / Fraction(e.eps[0].rank)


@dataclass
class ResidualResult:
    t: np.ndarray
    g: np.ndarray
    report: DecayReport

    @property
    def norms(self) -> np.ndarray:
        return np.linalg.norm(self.g, axis=1)


def _check_domain(p: Problem, t) -> None:
    t = np.asarray(t, dtype=float)
    if t.size and t.min() < p.t0:
        raise ValueError(f"sample time {t.min():.6g} lies before t0 = {p.t0:.6g}")


def residual(p: Problem, e: ExpansionResult, k: int | None = None, t_samples=None,
             n_windows: int = N_WINDOWS) -> ResidualResult:
    """Sample ``g = -s' + A s + f + sum eps_l f_l(t, s)`` for the ``k``-truncation.

    The derivative ``s'`` is taken symbolically, so ``g`` is an exact
    finite series before it is evaluated.
    """
    k = _truncation(e, k)
    if t_samples is None:
        t_samples = sample_times(max(p.t0, T_LO), T_HI, n_windows)
    t = np.asarray(t_samples, dtype=float)
    _check_domain(p, t)
    g_series = residual_series(p, e, k)
    g = Table.from_series(g_series, p.n, p.basis)(t)
    q = claimed_exponent(e, k)
    rep = fit_decay(t, g, p.eps[0], q, n_windows, label=f"residual k={k}")
    return ResidualResult(t, g, rep)


def residual_consistency(e: ExpansionResult, t: float = 1e3, k: int | None = None,
                         h: float = 1e-2) -> float:
    """Relative gap between symbolic ``s'`` and an 8th-order central difference."""
    k = _truncation(e, k)
    s = e.series(k)
    ds = series_derivative(s)
    weights = np.array([1 / 280, -4 / 105, 1 / 5, -4 / 5, 0.0, 4 / 5, -1 / 5, 4 / 105, -1 / 280])
    offsets = np.arange(-4, 5) * h
    vals = s.evaluate(t + offsets)
    fd = weights @ vals / h
    exact = ds.evaluate(np.array([t]))[0]
    return float(np.linalg.norm(fd - exact) / max(np.linalg.norm(exact), 1e-300))


# error check ----------------------------------------------------------------------------------

def _simple_eigenvalues(A) -> np.ndarray:
    lam = np.linalg.eigvals(A)
    scale = max(1.0, float(np.abs(lam).max()))
    for i in range(lam.size):
        for j in range(i + 1, lam.size):
            if abs(lam[i] - lam[j]) <= EIG_SEPARATION * scale:
                raise SpectrumError(f"eigenvalues {lam[i]:.6g} and {lam[j]:.6g} coincide")
    return lam


def check_mode(p: Problem, mode: str, e: ExpansionResult | None = None, k: int | None = None,
               varpi=None) -> None:
    """Raise ``SpectrumError`` unless the spectral preconditions of ``mode`` hold."""
    lam = p.eigenvalues()
    if mode == "npi":
        bad = [x for x in lam if abs(x.real) <= EIG_SEPARATION]
        if bad:
            raise SpectrumError(f"eigenvalue {bad[0]:.6g} lies on the imaginary axis")
    elif mode == "simple":
        _simple_eigenvalues(p.A)
        if varpi is None:
            raise SpectrumError("simple mode needs the integrability exponent varpi")
        if e is not None:
            k = _truncation(e, k)
            rho = Fraction(e.rank(k + 1))
            r1 = Fraction(p.eps[0].rank)
            w = Fraction(varpi).limit_denominator(10**9)
            if not rho > r1 * w:
                raise SpectrumError(f"rank {rho} does not exceed varrho_1 * varpi = {r1 * w}")
            if not rho >= r1 * (2 * w - 1):
                raise SpectrumError(f"rank {rho} is below varrho_1 (2 varpi - 1) = {r1 * (2 * w - 1)}")
    else:
        raise ValueError(f"unknown mode {mode!r} (expected 'npi' or 'simple')")


@dataclass
class ErrorCheck:
    """Per-launch decay reports for ``r = y - s`` and the merged verdict."""

    q: float
    reports: list
    trajectories: list
    displays: list

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.reports)

    @property
    def report(self) -> DecayReport:
        """The launch with the smallest fitted slope."""
        return min(self.reports, key=lambda r: r.slope)


def error_exponent(e: ExpansionResult, k: int, mode: str, varpi=None,
                   display_k: int | None = None) -> Fraction:
    r1 = Fraction(e.eps[0].rank)
    if display_k is not None:
        return Fraction(e.rank(display_k + 1)) / r1
    q = Fraction(e.rank(k + 1)) / r1
    if mode == "simple":
        q -= Fraction(varpi).limit_denominator(10**9)
    return q


def error_check(p: Problem, e: ExpansionResult, k: int | None = None, mode: str = "npi",
                varpi=None, display_k: int | None = None, launch_times: Sequence[float] | None = None,
                t_max: float = T_HI, rtol: float = 1e-10, atol: float = 1e-20,
                n_windows: int = N_WINDOWS, per_window: int = PER_WINDOW,
                perturbation=None, q_override=None) -> ErrorCheck:
    """Integrate from ``y0 = s(t0')`` and fit ``||y - s||`` against the claimed order.

    Parameters
    ----------
    k : int, optional
        Truncation used for the launch value and the integration (default:
        the depth of ``e``).
    mode : {"npi", "simple"}
        Selects the claimed exponent: ``rho_{k+1}/varrho_1`` or
        ``rho_{k+1}/varrho_1 - varpi``.
    display_k : int, optional
        Measure the error against the shorter truncation ``s_{display_k}``
        with claim ``rho_{display_k+1}/varrho_1``.
    launch_times : sequence of float, optional
        Launch points ``t0'`` (default: ``max(t0, 100)``).
    perturbation : array_like, optional
        Offset added to the launch value.
    q_override : float, optional
        Replace the claimed exponent (used for sensitivity checks).
    """
    k = _truncation(e, k)
    check_mode(p, mode, e, k, varpi)
    if display_k is not None:
        display_k = int(display_k)
        if not 0 <= display_k <= k:
            raise ValueError(f"display truncation {display_k} outside 0..{k}")
        if mode == "simple":
            need = Fraction(e.rank(display_k + 1)) + Fraction(varpi).limit_denominator(10**9) \
                * Fraction(p.eps[0].rank)
            if Fraction(e.rank(k + 1)) < need:
                raise SpectrumError(f"rank {e.rank(k + 1)} is below the display requirement {need}")
    q = error_exponent(e, k, mode, varpi, display_k) if q_override is None else q_override
    if launch_times is None:
        launch_times = (max(p.t0, T_LO),)
    fld = compile_error_field(p, e, k)
    gap = None
    if display_k is not None and display_k < k:
        s_full = e.series(k)
        s_disp = e.series(display_k)
        gap = Table.build(
            [x for x in _gap_entries(s_full, s_disp)], p.n, p.basis)
    reports, trajs, displays = [], [], []
    r0 = np.zeros(p.n) if perturbation is None else np.asarray(perturbation, dtype=float)
    for t_launch in launch_times:
        t_launch = float(t_launch)
        if t_launch < p.t0:
            raise ValueError(f"launch time {t_launch:.6g} lies before t0 = {p.t0:.6g}")
        t_eval = sample_times(t_launch, t_max, n_windows, per_window)
        tr = integrate_field(fld, r0, (t_launch, t_max), t_eval, rtol=rtol, atol=atol)
        r = tr.y if gap is None else tr.y + gap(tr.t)
        reports.append(fit_decay(tr.t, r, p.eps[0], q, n_windows,
                                 label=f"error k={k} launch={t_launch:g}"))
        trajs.append(tr)
        displays.append(r)
    return ErrorCheck(float(q), reports, trajs, displays)


def _gap_entries(s_full, s_disp):
    from .expansion import FormalSeries
    from .integrate import series_entries
    diff = FormalSeries(s_full.eps, {m: c for m, c in s_full.terms.items()
                                     if m not in s_disp.terms})
    return series_entries(diff)


# first-order diagonal means and parameter counts -----------------------------------------------

@dataclass
class GammaDiagnostics:
    """Diagonal means ``gamma[l][j] = M((P0^{-1} J_l(t, phi0) P0)_jj)``.

    ``gamma`` maps the 1-based index ``l`` of each non-summable parameter
    to a length-``n`` complex array.
    """

    P0: np.ndarray
    eigenvalues: np.ndarray
    gamma: dict
    npi_count: int | None = None

    def as_matrix(self) -> np.ndarray:
        """Rows ``j``, columns in increasing ``l``."""
        if not self.gamma:
            return np.zeros((self.eigenvalues.size, 0), dtype=complex)
        return np.column_stack([self.gamma[l] for l in sorted(self.gamma)])


def gamma_first_order(p: Problem, e: ExpansionResult | None = None, P0=None) -> GammaDiagnostics:
    """First-order diagonal means of the conjugated Jacobians.

    Parameters
    ----------
    P0 : array_like, optional
        Eigenvector matrix of ``A``; computed when omitted.
    """
    lam = _simple_eigenvalues(p.A)
    if P0 is None:
        lam, P0 = np.linalg.eig(p.A)
    P0 = np.asarray(P0, dtype=complex)
    cond = np.linalg.cond(P0)
    if not np.isfinite(cond) or cond > P0_COND_MAX:
        raise SpectrumError(f"eigenvector matrix is ill-conditioned (cond = {cond:.3g})")
    lam = np.diag(np.linalg.solve(P0, p.A @ P0))
    phi0 = e.phi0 if e is not None else None
    if phi0 is None:
        from .expansion import solve_phi0
        phi0 = solve_phi0(p)
    gamma = {}
    for eps_l, nl in zip(p.eps, p.nonlinearities):
        if eps_l.is_summable():
            continue
        J = OscMatrix.from_columns(jacobian_at(nl, phi0))
        diag = J.similarity_diagonal(P0)
        gamma[eps_l.index] = np.array([d.mean() for d in diag], dtype=complex)
    npi = int(np.sum(lam.real < 0)) if np.all(np.abs(lam.real) > EIG_SEPARATION) else None
    return GammaDiagnostics(P0, lam, gamma, npi)


@dataclass
class ParameterCount:
    count: int
    mode: str
    verdicts: list  # per j: True when the index contributes a free constant
    integrals: np.ndarray | None = None
    grid: np.ndarray | None = None


def divergent(values, level: float = DIVERGENCE_LEVEL) -> bool:
    """``True`` iff the last value exceeds ``level`` and the last three increase."""
    v = np.asarray(values, dtype=float)
    if v.size < 3:
        raise ValueError("need at least three grid values")
    return bool(v[-1] > level and v[-3] < v[-2] < v[-1])


def parameter_count(p: Problem, diag: GammaDiagnostics | None = None, mode: str = "npi",
                    e: ExpansionResult | None = None, k: int | None = None, varpi=None,
                    decades: float = 30.0, n_grid: int = 61,
                    level: float = DIVERGENCE_LEVEL) -> ParameterCount:
    """Number of free constants in the error term.

    In ``npi`` mode this is the number of eigenvalues with negative real
    part.  In ``simple`` mode, for each ``j`` the running integral of
    ``Re lambda_j + sum_l Re gamma_{j,l} eps_l(t) + (varpi - q) eps_1'/eps_1``
    with ``q = rho_{k+1}/varrho_1`` is evaluated on a geometric grid
    spanning ``decades`` decades from ``t0``; an index counts unless the
    integral is classified as divergent to ``+inf``.
    """
    if mode == "npi":
        check_mode(p, "npi")
        lam = p.eigenvalues()
        verdicts = [bool(x.real < 0) for x in lam]
        return ParameterCount(sum(verdicts), mode, verdicts)
    if mode != "simple":
        raise ValueError(f"unknown mode {mode!r} (expected 'npi' or 'simple')")
    if varpi is None or e is None:
        raise ValueError("simple mode needs the expansion and varpi")
    w = Fraction(varpi).limit_denominator(10**9)
    if w > 2:
        raise ValueError("the simple-mode diagnostic is defined only for varpi <= 2")
    k = _truncation(e, k)
    check_mode(p, "simple", e, k, varpi)
    if diag is None:
        diag = gamma_first_order(p, e)
    q = claimed_exponent(e, k)
    eps1 = p.eps[0]
    d_eps1 = eps1.derivative(1)
    shift = float(w - q)
    t0 = float(p.t0)
    u_grid = np.linspace(np.log(t0), np.log(t0) + decades * np.log(10.0), n_grid)
    eps_by_index = {x.index: x for x in p.eps}

    def integrand_factory(j):
        lam_re = float(diag.eigenvalues[j].real)
        coeffs = [(eps_by_index[l], float(np.real(g[j]))) for l, g in diag.gamma.items()]

        def h(u):
            t = np.exp(u)
            val = lam_re
            for eps_l, c in coeffs:
                if c:
                    val += c * float(eps_l(t))
            val += shift * float(d_eps1.evaluate(t)) / float(eps1(t))
            return val * t
        return h

    integrals = np.zeros((diag.eigenvalues.size, n_grid))
    verdicts = []
    for j in range(diag.eigenvalues.size):
        h = integrand_factory(j)
        acc = 0.0
        for i in range(1, n_grid):
            piece, _ = sp_integrate.quad(h, u_grid[i - 1], u_grid[i], limit=200)
            acc += piece
            integrals[j, i] = acc
        verdicts.append(not divergent(integrals[j], level))
    return ParameterCount(sum(verdicts), mode, verdicts, integrals, np.exp(u_grid))


__all__ = [
    "DecayReport",
    "ErrorCheck",
    "GammaDiagnostics",
    "ParameterCount",
    "ResidualResult",
    "SpectrumError",
    "Trajectory",
    "check_mode",
    "claimed_exponent",
    "divergent",
    "error_check",
    "error_exponent",
    "fit_decay",
    "gamma_first_order",
    "parameter_count",
    "residual",
    "residual_consistency",
    "sample_times",
    "window_edges",
]
