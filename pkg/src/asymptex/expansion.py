"""Formal asymptotic particular solution of a quasilinear system.

The system is

    y' = A y + f(t) + sum_l eps_l(t) f_l(t, y),

with ``f`` and the coefficients of the polynomial nonlinearities ``f_l`` in
an oscillating class (``OscFn``).  The solution is sought as

    y ~ phi_0(t) + sum_s sum_p nu_sp(t) phi_sp(t),

graded by the rank of the monomials ``nu_sp``.  Each coefficient solves a
linear equation ``phi' = A phi + g_sp`` whose right-hand side only involves
coefficients of strictly smaller rank.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import product
from typing import Mapping, Sequence

import numpy as np

from .osc import (
    DELTA_MIN,
    TAU_RESIDUAL,
    GeneratorBasis,
    OscFn,
    OscVector,
    linear_residual,
    separation_check,
    solve_system_linear,
    triangularize,
)
from .ranks import (
    EpsSpec,
    NuMonomial,
    enumerate_ranks,
    first_ranks,
    monomial_derivative,
    monomial_evaluate,
    monomials_of_rank,
    validate_eps,
)

ONE = NuMonomial.one()


class RankOverflowError(ValueError):
    pass


def _multi_indices(n: int, max_degree: int):
    for alpha in product(range(max_degree + 1), repeat=n):
        if sum(alpha) <= max_degree:
            yield alpha


class PolyNonlinearity:
    """``f_l(t, y) = sum_alpha coeff_alpha(t) * y**alpha``.

    Parameters
    ----------
    index : int
        1-based index ``l`` of the parameter multiplying this term.
    terms : mapping
        Multi-index (tuple of ``n`` nonnegative ints) to ``OscVector``.
    n : int
        State dimension.
    basis : GeneratorBasis
    """

    def __init__(self, index: int, terms: Mapping, n: int, basis: GeneratorBasis):
        self.index = int(index)
        self.n = int(n)
        self.basis = basis
        clean = {}
        for alpha, coeff in terms.items():
            alpha = tuple(int(a) for a in alpha)
            if len(alpha) != n or min(alpha, default=0) < 0:
                raise ValueError(f"bad multi-index {alpha} for dimension {n}")
            if len(coeff) != n:
                raise ValueError(f"coefficient of {alpha} must have {n} components")
            if coeff.basis != basis:
                raise ValueError("nonlinearity coefficient uses a foreign basis")
            clean[alpha] = clean[alpha] + coeff if alpha in clean else coeff
        self.terms = dict(sorted((a, c) for a, c in clean.items() if c))

    @property
    def degree(self) -> int:
        return max((sum(a) for a in self.terms), default=0)

    def __repr__(self):
        return f"PolyNonlinearity(l={self.index}, terms={list(self.terms)})"

    def evaluate(self, t, y):
        """Numeric value at time(s) ``t`` and state(s) ``y`` of shape (..., n)."""
        y = np.asarray(y, dtype=float)
        out = np.zeros(np.broadcast(np.asarray(t)[..., None], y).shape)
        for alpha, coeff in self.terms.items():
            mono = np.ones(y.shape[:-1])
            for j, a in enumerate(alpha):
                if a:
                    mono = mono * y[..., j] ** a
            out = out + coeff(t) * mono[..., None]
        return out

    def jacobian_numeric(self, t, y, h=1e-6):
        y = np.asarray(y, dtype=float)
        cols = []
        for j in range(self.n):
            e = np.zeros(self.n)
            e[j] = h
            cols.append((self.evaluate(t, y + e) - self.evaluate(t, y - e)) / (2 * h))
        return np.stack(cols, axis=-1)


@dataclass
class Problem:
    """``y' = A y + f(t) + sum_l eps_l(t) f_l(t, y)`` on ``t >= t0``."""

    A: np.ndarray
    f: OscVector
    eps: list
    nonlinearities: list
    a: float = 1.0
    t0: float = 100.0
    name: str = ""
    delta_min: float = DELTA_MIN

    def __post_init__(self):
        self.A = np.array(self.A, dtype=float)
        n = self.A.shape[0]
        if self.A.shape != (n, n):
            raise ValueError("A must be square")
        if n < 2:
            raise ValueError("dimension must be at least 2")
        if len(self.f) != n:
            raise ValueError("forcing has wrong dimension")
        if not self.eps:
            raise ValueError("at least one parameter eps_l is required")
        validate_eps(self.eps)
        if len(self.nonlinearities) != len(self.eps):
            raise ValueError("one nonlinearity per parameter is required")
        for pos, nl in enumerate(self.nonlinearities, start=1):
            if nl.index != pos or nl.n != n:
                raise ValueError(f"nonlinearity {pos} is inconsistent with the problem")
            if nl.basis != self.basis:
                raise ValueError(f"nonlinearity {pos} uses a foreign basis")
        if self.a <= 0:
            raise ValueError("domain radius must be positive")
        depth = max(e.depth for e in self.eps)
        from .ranks import log_tower_threshold
        if self.t0 <= log_tower_threshold(depth):
            raise ValueError(f"t0 = {self.t0} is too small for the iterated logarithms")

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return len(self.eps)

    @property
    def basis(self) -> GeneratorBasis:
        return self.f.basis

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvals(self.A)

    def rhs(self, t, y):
        """Numeric right-hand side (used by tests and slow paths)."""
        y = np.asarray(y, dtype=float)
        out = y @ self.A.T + self.f(t)
        for e, nl in zip(self.eps, self.nonlinearities):
            if nl.terms:
                out = out + np.asarray(e(t))[..., None] * nl.evaluate(t, y)
        return out


# formal series ------------------------------------------------------------------------

class FormalSeries:
    """Map from ``NuMonomial`` to coefficient (``OscVector`` or ``OscFn``).

    The unit monomial holds the rank-zero part.  ``cutoff`` (a rank, or None)
    drops every product term above it.
    """

    def __init__(self, eps: Sequence[EpsSpec], terms: Mapping | None = None, cutoff=None):
        self.eps = list(eps)
        self.cutoff = cutoff
        self._rank_cache: dict = {}
        self.terms: dict = {}
        for mono, coeff in (terms or {}).items():
            self.add_term(mono, coeff)

    def rank(self, mono: NuMonomial) -> Fraction:
        r = self._rank_cache.get(mono)
        if r is None:
            r = mono.rank(self.eps)
            self._rank_cache[mono] = r
        return r

    def add_term(self, mono: NuMonomial, coeff):
        if self.cutoff is not None and self.rank(mono) > self.cutoff:
            return
        if mono in self.terms:
            self.terms[mono] = self.terms[mono] + coeff
        else:
            self.terms[mono] = coeff

    def __iter__(self):
        return iter(sorted(self.terms.items(), key=lambda kv: (self.rank(kv[0]), kv[0])))

    def __len__(self):
        return len(self.terms)

    def monomials(self):
        return sorted(self.terms, key=lambda m: (self.rank(m), m))

    def component(self, j: int) -> "FormalSeries":
        return FormalSeries(self.eps, {m: c[j] for m, c in self.terms.items()}, self.cutoff)

    def multiply(self, other: "FormalSeries", cutoff=None) -> "FormalSeries":
        """Product of two scalar series, truncated at ``cutoff``."""
        out = FormalSeries(self.eps, cutoff=cutoff)
        out._rank_cache = self._rank_cache
        for m1, c1 in self.terms.items():
            r1 = self.rank(m1)
            if cutoff is not None and r1 > cutoff:
                continue
            for m2, c2 in other.terms.items():
                if cutoff is not None and r1 + other.rank(m2) > cutoff:
                    continue
                out.add_term(m1 * m2, c1 * c2)
        return out

    def evaluate(self, t):
        """Numeric value: sum of ``nu(t) * coeff(t)``."""
        t = np.asarray(t, dtype=float)
        total = None
        for mono, coeff in self.terms.items():
            val = coeff(t)
            if not mono.is_one:
                w = monomial_evaluate(mono, self.eps, t)
                val = val * (w[..., None] if np.ndim(val) > np.ndim(w) else w)
            total = val if total is None else total + val
        return total

    def max_coefficient_by_rank(self) -> dict:
        out: dict = {}
        for mono, coeff in self.terms.items():
            r = Fraction(0) if mono.is_one else self.rank(mono)
            out[r] = max(out.get(r, 0.0), coeff.max_coefficient())
        return dict(sorted(out.items()))


def _scalar_one(eps, basis, cutoff=None) -> FormalSeries:
    return FormalSeries(eps, {ONE: OscFn.constant(basis, 1.0)}, cutoff)


def series_pow(delta: FormalSeries, wp: Sequence[int], cutoff=None) -> FormalSeries:
    """``prod_j delta_j ** wp[j]`` as a scalar series truncated at ``cutoff``."""
    basis = next(iter(delta.terms.values())).basis if delta.terms else None
    if basis is None:
        raise ValueError("cannot infer basis from an empty series")
    if ONE in delta.terms and delta.terms[ONE]:
        raise ValueError("series_pow expects a series without a constant term")
    out = _scalar_one(delta.eps, basis, cutoff)
    out._rank_cache = delta._rank_cache
    for j, power in enumerate(wp):
        if not power:
            continue
        comp = delta.component(j)
        for _ in range(power):
            out = out.multiply(comp, cutoff)
    return out


def _phi_power(phi0: OscVector, beta) -> OscFn:
    val = OscFn.constant(phi0.basis, 1.0)
    for j, b in enumerate(beta):
        if b:
            val = val * phi0[j] ** b
    return val


def taylor_coefficient(nl: PolyNonlinearity, wp: Sequence[int], phi0: OscVector) -> OscVector:
    """``(1/wp!) * d^wp f_l / dy^wp`` evaluated at ``phi0``, exactly."""
    wp = tuple(int(x) for x in wp)
    out = OscVector.zeros(phi0.basis, nl.n)
    for alpha, coeff in nl.terms.items():
        if any(a < w for a, w in zip(alpha, wp)):
            continue
        weight = 1
        for a, w in zip(alpha, wp):
            weight *= math.comb(a, w)
        rest = tuple(a - w for a, w in zip(alpha, wp))
        out = out + coeff * (_phi_power(phi0, rest) * float(weight))
    return out


def jacobian_at(nl: PolyNonlinearity, phi0: OscVector):
    """Columns ``d f_l / d y_j`` at ``phi0`` as ``OscVector`` list."""
    cols = []
    for j in range(nl.n):
        unit = [0] * nl.n
        unit[j] = 1
        cols.append(taylor_coefficient(nl, unit, phi0))
    return cols


def solve_phi0(p: Problem) -> OscVector:
    return solve_system_linear(p.A, p.f, p.delta_min)


# recursion ----------------------------------------------------------------------------

@dataclass
class ExpansionResult:
    """Coefficients of the formal solution up to rank ``ranks[-1]``."""

    problem: Problem
    phi0: OscVector
    ranks: list
    next_rank: Fraction
    levels: list  # per rank: list of (NuMonomial, OscVector)
    rhs: dict  # NuMonomial -> OscVector right-hand side g_sp
    certificates: dict  # NuMonomial -> max residual coefficient ('phi0' for the zeroth term)
    separation: dict = field(default_factory=dict)

    @property
    def k(self) -> int:
        return len(self.ranks)

    @property
    def eps(self):
        return self.problem.eps

    def coefficient(self, s: int, p: int) -> OscVector:
        """``phi_sp`` with 1-based ``s`` and ``p``."""
        return self.levels[s - 1][p - 1][1]

    def monomial(self, s: int, p: int) -> NuMonomial:
        return self.levels[s - 1][p - 1][0]

    def kappa(self, s: int) -> int:
        return len(self.levels[s - 1])

    def rank(self, s: int) -> Fraction:
        """``rho_s`` for ``1 <= s <= k + 1``."""
        if s == self.k + 1:
            return self.next_rank
        return self.ranks[s - 1]

    def series(self, up_to: int | None = None) -> FormalSeries:
        """``s(t)`` as a formal series (unit monomial carries ``phi0``)."""
        up_to = self.k if up_to is None else up_to
        if up_to > self.k:
            raise RankOverflowError(f"expansion built to depth {self.k}, asked for {up_to}")
        terms = {ONE: self.phi0}
        for level in self.levels[:up_to]:
            for mono, coeff in level:
                terms[mono] = coeff
        return FormalSeries(self.eps, terms)

    def max_certificate(self) -> float:
        return max(self.certificates.values(), default=0.0)


def _contributions(p: Problem, taylor: dict, delta: FormalSeries, rank_now: Fraction,
                   prev_level) -> FormalSeries:
    """Right-hand sides of the coefficient equations at ``rank_now``.

    Collects the nonlinear Taylor terms ``eps_l * T_l,wp * delta**wp`` and
    the derivative terms ``-(d nu / dt) phi_nu`` of the previous ranks; only
    terms of rank exactly ``rank_now`` are kept.
    """
    out = FormalSeries(p.eps, cutoff=rank_now)
    out._rank_cache = delta._rank_cache
    for e, nl in zip(p.eps, p.nonlinearities):
        if not nl.terms or e.rank > rank_now:
            continue
        eps_mono = NuMonomial.eps(e.index)
        budget = rank_now - e.rank
        for wp, coeff in taylor[e.index].items():
            if sum(wp) == 0:
                if budget == 0:
                    out.add_term(eps_mono, coeff)
                continue
            if not delta.terms:
                continue
            powered = series_pow(delta, wp, budget)
            for mono, scal in powered.terms.items():
                if out.rank(mono) != budget:
                    continue
                out.add_term(eps_mono * mono, coeff * scal)
    for mono, phi in prev_level:
        for c, dmono in monomial_derivative(mono):
            if out.rank(dmono) == rank_now:
                out.add_term(dmono, phi * -c)
    return out


def build_expansion(p: Problem, k: int) -> ExpansionResult:
    """Coefficients ``phi_sp`` for the first ``k`` ranks."""
    if k < 0:
        raise ValueError("k must be nonnegative")
    phi0 = solve_phi0(p)
    lam = p.eigenvalues()
    certificates = {"phi0": linear_residual(p.A, phi0, p.f).max_coefficient()}
    separation = {"phi0": separation_check(p.f, lam).min_distance if p.f else math.inf}
    try:
        ranks_all = first_ranks(p.eps, k + 1)
    except ValueError as exc:
        raise RankOverflowError(str(exc)) from exc
    ranks, next_rank = ranks_all[:k], ranks_all[k]

    taylor = {}
    for e, nl in zip(p.eps, p.nonlinearities):
        taylor[e.index] = {}
        for wp in _multi_indices(p.n, nl.degree):
            coeff = taylor_coefficient(nl, wp, phi0)
            if coeff:
                taylor[e.index][wp] = coeff

    delta = FormalSeries(p.eps)
    levels, rhs = [], {}
    prev_level: list = []
    for s, rho in enumerate(ranks, start=1):
        contrib = _contributions(p, taylor, delta, rho, prev_level)
        monos = monomials_of_rank(p.eps, rho)
        stray = set(contrib.terms) - set(monos)
        if stray:
            raise AssertionError(f"rank {rho} produced monomials outside M_{s}: {stray}")
        level = []
        for mono in monos:
            g = contrib.terms.get(mono, OscVector.zeros(p.basis, p.n))
            phi = solve_system_linear(p.A, g, p.delta_min)
            rhs[mono] = g
            certificates[mono] = linear_residual(p.A, phi, g).max_coefficient()
            separation[mono] = separation_check(g, lam).min_distance if g else math.inf
            level.append((mono, phi))
        for mono, phi in level:
            delta.add_term(mono, phi)
        levels.append(level)
        prev_level = level
    return ExpansionResult(p, phi0, ranks, next_rank, levels, rhs, certificates, separation)


def truncated_sum(e: ExpansionResult, up_to: int | None = None):
    """Callable ``s(t)`` summing ``phi0`` and all terms of the first ``up_to`` ranks."""
    series = e.series(up_to)

    def s(t):
        return series.evaluate(t)

    s.series = series
    return s


# symbolic derivative and residual -------------------------------------------------------

def series_derivative(series: FormalSeries) -> FormalSeries:
    """``d/dt`` of a vector series: coefficient derivatives plus monomial derivatives."""
    out = FormalSeries(series.eps)
    out._rank_cache = series._rank_cache
    for mono, coeff in series.terms.items():
        out.add_term(mono, coeff.derivative())
        if mono.is_one:
            continue
        for c, dmono in monomial_derivative(mono):
            out.add_term(dmono, coeff * c)
    return out


def apply_nonlinearity(nl: PolyNonlinearity, state: FormalSeries) -> FormalSeries:
    """``f_l(t, state)`` as an untruncated vector series."""
    basis = nl.basis
    comps = [state.component(j) for j in range(nl.n)]
    powers: dict = {}

    def comp_power(j, a):
        key = (j, a)
        if key not in powers:
            if a == 0:
                powers[key] = _scalar_one(state.eps, basis)
            else:
                powers[key] = comp_power(j, a - 1).multiply(comps[j])
        return powers[key]

    out = FormalSeries(state.eps)
    out._rank_cache = state._rank_cache
    for alpha, coeff in nl.terms.items():
        prod_series = _scalar_one(state.eps, basis)
        for j, a in enumerate(alpha):
            if a:
                prod_series = prod_series.multiply(comp_power(j, a))
        for mono, scal in prod_series.terms.items():
            out.add_term(mono, coeff * scal)
    return out


def residual_series(p: Problem, e: ExpansionResult, up_to: int | None = None) -> FormalSeries:
    """``-s' + A s + f + sum_l eps_l f_l(t, s)`` exactly, as a formal series."""
    s = e.series(up_to)
    out = FormalSeries(p.eps)
    out._rank_cache = s._rank_cache
    for mono, coeff in series_derivative(s).terms.items():
        out.add_term(mono, -coeff)
    for mono, coeff in s.terms.items():
        out.add_term(mono, coeff.matmul(p.A))
    out.add_term(ONE, p.f)
    for eps_l, nl in zip(p.eps, p.nonlinearities):
        if not nl.terms:
            continue
        eps_mono = NuMonomial.eps(eps_l.index)
        for mono, coeff in apply_nonlinearity(nl, s).terms.items():
            out.add_term(eps_mono * mono, coeff)
    return out
