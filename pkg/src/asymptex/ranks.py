"""Vanishing power-log parameters, their derivatives, and the rank calculus.

A parameter is a single power-log monomial

    eps(t) = coef * t**(-a0) * L1(t)**c1 * ... * Lp(t)**cp,

with iterated logarithms ``L1 = ln t``, ``Lq = ln L(q-1)``.  Products of
parameters and their derivatives (``NuMonomial``) carry the rank
``sum (rank_l + r) * beta_lr``; all ranks are exact ``Fraction`` values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import total_ordering
from typing import Iterable, Mapping, Sequence

import numpy as np


class LogDomainError(ValueError):
    """Evaluation point too small for the iterated logarithms."""


def _frac(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, float):
        return Fraction(x).limit_denominator(10**9)
    return Fraction(x)


def log_tower_threshold(depth: int) -> float:
    """Smallest ``t`` at which ``L1..L_depth`` are all positive."""
    thr = 1.0
    for _ in range(max(depth - 1, 0)):
        thr = math.exp(thr)
    return thr


def iterated_logs(t, depth: int) -> list:
    """``[L1(t), ..., L_depth(t)]``; raises ``LogDomainError`` off-domain."""
    t = np.asarray(t, dtype=float)
    if depth == 0:
        return []
    if np.any(t <= log_tower_threshold(depth)):
        raise LogDomainError(
            f"t must exceed {log_tower_threshold(depth):.6g} for {depth} iterated logarithms")
    out = []
    cur = t
    for _ in range(depth):
        cur = np.log(cur)
        out.append(cur)
    return out


# power-log functions ---------------------------------------------------------------

@dataclass(frozen=True)
class PowerLogMonomial:
    """``coef * t**(-a0) * prod L_q**logs[q-1]``."""

    coef: float
    a0: Fraction
    logs: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "a0", _frac(self.a0))
        logs = tuple(_frac(c) for c in self.logs)
        while logs and logs[-1] == 0:
            logs = logs[:-1]
        object.__setattr__(self, "logs", logs)
        object.__setattr__(self, "coef", float(self.coef))

    @property
    def signature(self) -> tuple:
        return (self.a0, self.logs)

    @property
    def depth(self) -> int:
        return len(self.logs)

    def __call__(self, t):
        return self.evaluate(t)

    def evaluate(self, t):
        t_arr = np.asarray(t, dtype=float)
        logs = iterated_logs(t_arr, self.depth)
        val = self.coef * t_arr ** (-float(self.a0))
        for L, c in zip(logs, self.logs):
            if c:
                val = val * L ** float(c)
        return val

    def derivative(self) -> "PowerLogSum":
        """Closure rule for ``d/dt``; the result is again a power-log sum."""
        terms = []
        new_a0 = self.a0 + 1
        if self.a0 != 0:
            terms.append((self.coef * -float(self.a0), new_a0, self.logs))
        for q, c in enumerate(self.logs):
            if c == 0:
                continue
            logs = list(self.logs)
            for j in range(q):
                logs[j] -= 1
            logs[q] -= 1
            terms.append((self.coef * float(c), new_a0, tuple(logs)))
        return PowerLogSum(PowerLogMonomial(c, a, l) for c, a, l in terms)


class PowerLogSum:
    """Finite linear combination of power-log monomials, merged by signature."""

    __slots__ = ("_terms",)

    def __init__(self, monomials: Iterable[PowerLogMonomial] = ()):
        acc: dict = {}
        for m in monomials:
            acc[m.signature] = acc.get(m.signature, 0.0) + m.coef
        self._terms = {sig: c for sig, c in sorted(acc.items()) if c != 0.0}

    @classmethod
    def one(cls) -> "PowerLogSum":
        return cls([PowerLogMonomial(1.0, 0)])

    @property
    def terms(self) -> dict:
        return self._terms

    @property
    def monomials(self) -> list:
        return [PowerLogMonomial(c, a0, logs) for (a0, logs), c in self._terms.items()]

    @property
    def depth(self) -> int:
        return max((len(logs) for _, logs in self._terms), default=0)

    def __len__(self):
        return len(self._terms)

    def __repr__(self):
        return f"PowerLogSum({self.monomials})"

    def __add__(self, other: "PowerLogSum") -> "PowerLogSum":
        return PowerLogSum(self.monomials + other.monomials)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return PowerLogSum(PowerLogMonomial(m.coef * other, m.a0, m.logs) for m in self.monomials)
        out = []
        for (a1, l1), c1 in self._terms.items():
            for (a2, l2), c2 in other._terms.items():
                width = max(len(l1), len(l2))
                l1p = l1 + (Fraction(0),) * (width - len(l1))
                l2p = l2 + (Fraction(0),) * (width - len(l2))
                out.append(PowerLogMonomial(c1 * c2, a1 + a2, tuple(x + y for x, y in zip(l1p, l2p))))
        return PowerLogSum(out)

    __rmul__ = __mul__

    def __pow__(self, n: int) -> "PowerLogSum":
        out = PowerLogSum.one()
        for _ in range(n):
            out = out * self
        return out

    def derivative(self) -> "PowerLogSum":
        out = PowerLogSum()
        for m in self.monomials:
            out = out + m.derivative()
        return out

    def __call__(self, t):
        return self.evaluate(t)

    def evaluate(self, t):
        t_arr = np.asarray(t, dtype=float)
        logs = iterated_logs(t_arr, self.depth)
        total = np.zeros_like(t_arr)
        for (a0, lg), c in self._terms.items():
            val = c * t_arr ** (-float(a0))
            for L, e in zip(logs, lg):
                if e:
                    val = val * L ** float(e)
            total = total + val
        return total


# parameters and monomials ----------------------------------------------------------

class EpsSpec:
    """A vanishing parameter ``eps_l`` with its rank.

    Parameters
    ----------
    index : int
        1-based parameter index ``l``.
    base : PowerLogMonomial
        The function itself; ``a0`` must be positive.
    rank : Fraction, optional
        Defaults to ``base.a0``.
    """

    def __init__(self, index: int, base: PowerLogMonomial, rank=None):
        if index < 1:
            raise ValueError("parameter indices start at 1")
        if base.a0 <= 0:
            raise ValueError("leading power exponent a0 must be positive")
        self.index = int(index)
        self.base = base
        self.rank = base.a0 if rank is None else _frac(rank)
        if self.rank <= 0:
            raise ValueError("rank must be positive")
        self._derivs = {0: PowerLogSum([base])}

    @classmethod
    def power_log(cls, index: int, a0, logs=(), coef=1.0, rank=None) -> "EpsSpec":
        return cls(index, PowerLogMonomial(coef, a0, tuple(logs)), rank)

    def __repr__(self):
        return f"EpsSpec(l={self.index}, a0={self.base.a0}, logs={self.base.logs}, rank={self.rank})"

    def __eq__(self, other):
        return (isinstance(other, EpsSpec) and self.index == other.index
                and self.base == other.base and self.rank == other.rank)

    def __hash__(self):
        return hash((self.index, self.base, self.rank))

    @property
    def depth(self) -> int:
        return self.base.depth

    def derivative(self, r: int) -> PowerLogSum:
        if r < 0:
            raise ValueError("derivative order must be nonnegative")
        top = max(self._derivs)
        while top < r:
            self._derivs[top + 1] = self._derivs[top].derivative()
            top += 1
        return self._derivs[r]

    def __call__(self, t):
        return self.base.evaluate(t)

    def is_summable(self) -> bool:
        """Whether ``int^oo eps dt`` converges."""
        a0 = self.base.a0
        if a0 != 1:
            return a0 > 1
        for c in self.base.logs:
            if c != -1:
                return c < -1
        return False


def eps_derivative(eps: EpsSpec, r: int) -> PowerLogSum:
    return eps.derivative(r)


def validate_eps(eps: Sequence[EpsSpec]) -> None:
    """Indices must run 1..m and ranks must be nondecreasing."""
    for pos, e in enumerate(eps, start=1):
        if e.index != pos:
            raise ValueError(f"parameter at position {pos} has index {e.index}")
    for prev, cur in zip(eps, eps[1:]):
        if cur.rank < prev.rank:
            raise ValueError(
                f"rank of eps_{cur.index} ({cur.rank}) is below rank of eps_{prev.index} ({prev.rank})")


@total_ordering
class NuMonomial:
    """Product ``prod_{l,r} (d^r eps_l / dt^r) ** beta_lr``.

    The exponent table maps ``(l, r)`` to a positive integer; ``l`` is 1-based.
    The empty table is the unit, used internally for constant terms.
    """

    __slots__ = ("_table", "_hash")

    def __init__(self, exponents: Mapping | Iterable = ()):
        items = exponents.items() if isinstance(exponents, Mapping) else exponents
        acc: dict = {}
        for (l, r), b in items:
            l, r, b = int(l), int(r), int(b)
            if l < 1 or r < 0 or b < 0:
                raise ValueError(f"bad exponent entry {(l, r)}: {b}")
            if b:
                acc[(l, r)] = acc.get((l, r), 0) + b
        self._table = tuple(sorted(acc.items()))
        self._hash = hash(self._table)

    @classmethod
    def one(cls) -> "NuMonomial":
        return cls()

    @classmethod
    def eps(cls, l: int, r: int = 0, power: int = 1) -> "NuMonomial":
        return cls({(l, r): power})

    @property
    def table(self) -> tuple:
        return self._table

    @property
    def is_one(self) -> bool:
        return not self._table

    def sort_key(self) -> tuple:
        return tuple((l, r, b) for (l, r), b in self._table)

    def __eq__(self, other):
        return isinstance(other, NuMonomial) and self._table == other._table

    def __lt__(self, other):
        return self.sort_key() < other.sort_key()

    def __hash__(self):
        return self._hash

    def __repr__(self):
        return f"NuMonomial({self.describe()})"

    def describe(self) -> str:
        if not self._table:
            return "1"
        parts = []
        for (l, r), b in self._table:
            s = f"eps{l}" + ("'" * r if r <= 3 else f"^({r})")
            if b > 1:
                s += f"^{b}"
            parts.append(s)
        return "*".join(parts)

    def __mul__(self, other: "NuMonomial") -> "NuMonomial":
        return monomial_multiply(self, other)

    def rank(self, eps: Sequence[EpsSpec]) -> Fraction:
        total = Fraction(0)
        for (l, r), b in self._table:
            if l > len(eps):
                raise KeyError(f"monomial references undeclared eps_{l}")
            total += (eps[l - 1].rank + r) * b
        return total

    def power_log(self, eps: Sequence[EpsSpec]) -> PowerLogSum:
        """Expand the product into a single power-log sum."""
        out = PowerLogSum.one()
        for (l, r), b in self._table:
            out = out * (eps[l - 1].derivative(r) ** b)
        return out


def rank_of(m: NuMonomial, eps: Sequence[EpsSpec]) -> Fraction:
    if m.is_one:
        raise ValueError("rank of the empty monomial is undefined")
    return m.rank(eps)


def monomial_multiply(a: NuMonomial, b: NuMonomial) -> NuMonomial:
    return NuMonomial(list(a.table) + list(b.table))


def monomial_derivative(m: NuMonomial) -> list:
    """Product rule: list of ``(coefficient, monomial)``; each has rank +1."""
    out = []
    table = dict(m.table)
    for (l, r), b in m.table:
        new = dict(table)
        if b == 1:
            del new[(l, r)]
        else:
            new[(l, r)] = b - 1
        new[(l, r + 1)] = new.get((l, r + 1), 0) + 1
        out.append((float(b), NuMonomial(new)))
    return out


def monomial_evaluate(m: NuMonomial, eps: Sequence[EpsSpec], t):
    t_arr = np.asarray(t, dtype=float)
    val = np.ones_like(t_arr)
    for (l, r), b in m.table:
        val = val * eps[l - 1].derivative(r).evaluate(t_arr) ** b
    return val


def _atoms(eps: Sequence[EpsSpec], rho_max: Fraction) -> list:
    """Factor keys ``(l, r)`` with weight ``rank_l + r <= rho_max``."""
    atoms = []
    for e in eps:
        r = 0
        while e.rank + r <= rho_max:
            atoms.append(((e.index, r), e.rank + r))
            r += 1
    return atoms


def enumerate_ranks(eps: Sequence[EpsSpec], rho_max) -> list:
    """All achievable ranks ``<= rho_max`` in ascending order."""
    rho_max = _frac(rho_max)
    weights = sorted({w for _, w in _atoms(eps, rho_max)})
    reached = {Fraction(0)}
    frontier = [Fraction(0)]
    while frontier:
        nxt = []
        for base in frontier:
            for w in weights:
                v = base + w
                if v > rho_max:
                    break
                if v not in reached:
                    reached.add(v)
                    nxt.append(v)
        frontier = nxt
    reached.discard(Fraction(0))
    return sorted(reached)


def first_ranks(eps: Sequence[EpsSpec], count: int) -> list:
    """The ``count`` smallest elements of the rank set."""
    if not eps:
        raise ValueError("no parameters declared")
    bound = eps[0].rank + count
    ranks = enumerate_ranks(eps, bound)
    # derivative chains eps_1, eps_1', ... guarantee count+1 ranks below the bound
    return ranks[:count]


def monomials_of_rank(eps: Sequence[EpsSpec], rho) -> list:
    """Every monomial of rank exactly ``rho`` in canonical order."""
    rho = _frac(rho)
    atoms = _atoms(eps, rho)
    found = []

    def walk(i, remaining, chosen):
        if remaining == 0:
            if chosen:
                found.append(NuMonomial(chosen))
            return
        if i == len(atoms):
            return
        key, w = atoms[i]
        max_b = int(remaining // w)
        for b in range(max_b, -1, -1):
            walk(i + 1, remaining - b * w, chosen + [(key, b)] if b else chosen)

    walk(0, rho, [])
    return sorted(set(found))
