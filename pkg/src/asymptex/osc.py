"""Exact algebra of finite exponential-trigonometric sums.

Every function handled here is a finite sum ``sum_k c_k * exp(mu_k * t)``
whose exponents lie on an integer lattice ``mu_k = sum_j k_j * nu_j`` over a
fixed tuple of generators ``nu_j``.  Exponent identity is decided on the
integer coefficient tuple ``k``; the complex value ``mu_k`` is only ever
derived, never compared.

Three families are covered by choosing the generators:

* purely periodic functions: one imaginary generator ``2*pi*i/tau``;
* almost periodic functions with finite spectra: several imaginary
  generators with rationally independent frequencies;
* decaying exponential sums: negative real generators with a nonnegative
  lattice.
"""

from __future__ import annotations

import cmath
from dataclasses import dataclass
from numbers import Number
from types import MappingProxyType
from typing import Iterable, Mapping, Sequence

import numpy as np
import scipy.linalg

TAU_ZERO = 1e-13
TAU_RESIDUAL = 1e-10
DELTA_MIN = 1e-6

FreqVector = tuple  # tuple[int, ...]


class BasisMismatchError(ValueError):
    """Operands live over different generator bases."""


class LatticeError(ValueError):
    """A frequency vector falls outside the admissible lattice."""


class ResonanceError(ArithmeticError):
    """An exponent sits closer than ``delta_min`` to an eigenvalue."""

    def __init__(self, key, mu, lam, distance):
        self.key = key
        self.mu = mu
        self.lam = lam
        self.distance = distance
        super().__init__(
            f"resonance: exponent {mu:.6g} (lattice {key}) is {distance:.3g} "
            f"from eigenvalue {lam:.6g}")


class TriangularizationError(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class GeneratorBasis:
    """Generators of the exponent lattice.

    Parameters
    ----------
    generators : tuple of complex
        Lattice generators, each with nonpositive real part.
    signed : tuple of bool, optional
        Whether negative multiples of a generator are admissible.  Defaults
        to True for purely imaginary generators and False otherwise.
    """

    generators: tuple
    signed: tuple = None

    def __post_init__(self):
        gens = tuple(complex(g) for g in self.generators)
        if not gens:
            raise ValueError("basis needs at least one generator")
        if self.signed is None:
            signed = tuple(g.real == 0.0 for g in gens)
        else:
            signed = tuple(bool(s) for s in self.signed)
        if len(signed) != len(gens):
            raise ValueError("one lattice flag per generator required")
        for g, s in zip(gens, signed):
            if g == 0:
                raise ValueError("zero generator")
            if g.real > 0:
                raise ValueError(f"generator {g} grows (Re > 0)")
            if s and g.real != 0.0:
                raise ValueError(f"generator {g} decays; its lattice must be nonnegative")
        if len(set(gens)) != len(gens):
            raise ValueError("generators must be pairwise distinct")
        object.__setattr__(self, "generators", gens)
        object.__setattr__(self, "signed", signed)
        object.__setattr__(self, "_gen_array", np.array(gens, dtype=complex))

    @classmethod
    def periodic(cls, period: float = 2 * np.pi) -> "GeneratorBasis":
        return cls((2j * np.pi / period,))

    @classmethod
    def almost_periodic(cls, frequencies: Sequence[float]) -> "GeneratorBasis":
        return cls(tuple(1j * float(w) for w in frequencies))

    @classmethod
    def decaying(cls, rates: Sequence[float]) -> "GeneratorBasis":
        return cls(tuple(complex(-abs(float(r))) for r in rates))

    @property
    def dim(self) -> int:
        return len(self.generators)

    def zero(self) -> FreqVector:
        return (0,) * self.dim

    def unit(self, j: int, sign: int = 1) -> FreqVector:
        k = [0] * self.dim
        k[j] = sign
        return tuple(k)

    def exponent(self, key: FreqVector) -> complex:
        return complex(np.dot(key, self._gen_array)) if any(key) else 0j

    def check(self, key: FreqVector) -> FreqVector:
        key = tuple(int(v) for v in key)
        if len(key) != self.dim:
            raise LatticeError(f"frequency vector {key} has wrong length (expected {self.dim})")
        for v, s in zip(key, self.signed):
            if v < 0 and not s:
                raise LatticeError(f"negative count in {key} on a nonnegative-lattice generator")
        return key

    def conjugate_key(self, key: FreqVector) -> FreqVector:
        """Lattice point of ``conj(mu)``; raises if it is not on the lattice."""
        out = []
        for v, g, s in zip(key, self.generators, self.signed):
            if v == 0 or g.imag == 0.0:
                out.append(v)
            elif g.real == 0.0 and s:
                out.append(-v)
            else:
                raise LatticeError(f"lattice not closed under conjugation at {key}")
        return tuple(out)


class OscFn:
    """Finite sum ``sum c * exp(mu t)`` over a lattice.

    Instances are immutable.  Coefficients with modulus below ``TAU_ZERO``
    are dropped at construction.
    """

    __slots__ = ("basis", "_terms", "real")

    def __init__(self, basis: GeneratorBasis, terms: Mapping | Iterable = ()):
        items = terms.items() if isinstance(terms, Mapping) else terms
        acc: dict = {}
        for key, c in items:
            key = basis.check(key)
            acc[key] = acc.get(key, 0j) + complex(c)
        self.basis = basis
        self._terms = MappingProxyType(
            {k: c for k, c in sorted(acc.items()) if abs(c) >= TAU_ZERO})
        self.real = self._is_conjugate_closed()

    @classmethod
    def constant(cls, basis, c) -> "OscFn":
        return cls(basis, {basis.zero(): c})

    @classmethod
    def exp(cls, basis, key, c=1.0) -> "OscFn":
        return cls(basis, {tuple(key): c})

    @classmethod
    def cos(cls, basis, key, amplitude=1.0) -> "OscFn":
        """``amplitude * cos(omega t)`` where ``i*omega`` is the exponent of ``key``."""
        neg = tuple(-v for v in key)
        return cls(basis, [(tuple(key), 0.5 * amplitude), (neg, 0.5 * amplitude)])

    @classmethod
    def sin(cls, basis, key, amplitude=1.0) -> "OscFn":
        neg = tuple(-v for v in key)
        return cls(basis, [(tuple(key), -0.5j * amplitude), (neg, 0.5j * amplitude)])

    @property
    def terms(self) -> Mapping:
        return self._terms

    def __len__(self):
        return len(self._terms)

    def __iter__(self):
        return iter(self._terms.items())

    def __bool__(self):
        return bool(self._terms)

    def __repr__(self):
        body = ", ".join(f"{k}: {c:.6g}" for k, c in self._terms.items())
        return f"OscFn({{{body}}})"

    def _is_conjugate_closed(self) -> bool:
        for key, c in self._terms.items():
            try:
                ck = self.basis.conjugate_key(key)
            except LatticeError:
                return False
            other = self._terms.get(ck, 0j)
            if abs(other - c.conjugate()) > TAU_ZERO * max(1.0, abs(c)):
                return False
        return True

    def _coerce(self, other) -> "OscFn":
        if isinstance(other, OscFn):
            if other.basis != self.basis:
                raise BasisMismatchError("operands use different generator bases")
            return other
        if isinstance(other, Number):
            return OscFn.constant(self.basis, other)
        return NotImplemented

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        terms = dict(self._terms)
        for k, c in other._terms.items():
            terms[k] = terms.get(k, 0j) + c
        return OscFn(self.basis, terms)

    __radd__ = __add__

    def __neg__(self):
        return OscFn(self.basis, {k: -c for k, c in self._terms.items()})

    def __sub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, Number):
            return OscFn(self.basis, {k: c * other for k, c in self._terms.items()})
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        terms: dict = {}
        for k1, c1 in self._terms.items():
            for k2, c2 in other._terms.items():
                k = tuple(a + b for a, b in zip(k1, k2))
                terms[k] = terms.get(k, 0j) + c1 * c2
        return OscFn(self.basis, terms)

    __rmul__ = __mul__

    def __pow__(self, n: int):
        if n < 0:
            raise ValueError("negative powers leave the class")
        out = OscFn.constant(self.basis, 1.0)
        base = self
        while n:
            if n & 1:
                out = out * base
            base = base * base
            n >>= 1
        return out

    def conj(self) -> "OscFn":
        return OscFn(self.basis, {self.basis.conjugate_key(k): c.conjugate()
                                  for k, c in self._terms.items()})

    def real_part(self) -> "OscFn":
        return (self + self.conj()) * 0.5

    def imag_part(self) -> "OscFn":
        return (self - self.conj()) * -0.5j

    def exponents(self) -> list:
        return [self.basis.exponent(k) for k in self._terms]

    def coefficient(self, key) -> complex:
        return self._terms.get(tuple(key), 0j)

    def norm(self) -> float:
        """Sum of coefficient moduli (an upper bound for the sup norm)."""
        return float(sum(abs(c) for c in self._terms.values()))

    def max_coefficient(self) -> float:
        return max((abs(c) for c in self._terms.values()), default=0.0)

    def derivative(self) -> "OscFn":
        return differentiate(self)

    def mean(self) -> complex:
        return mean_value(self)

    def __call__(self, t):
        return evaluate(self, t)

    def almost_equal(self, other: "OscFn", tol: float = TAU_RESIDUAL) -> bool:
        return (self - other).max_coefficient() < tol


# ring_ops ---------------------------------------------------------------------

def ring_ops(a: OscFn, b: OscFn | None = None, kind: str = "add", scalar=None) -> OscFn:
    """Dispatch one ring operation by name: add, mul, scale or negate."""
    if kind == "add":
        return a + b
    if kind == "mul":
        return a * b
    if kind == "scale":
        return a * complex(scalar)
    if kind == "negate":
        return -a
    raise ValueError(f"unknown ring operation {kind!r}")


def differentiate(a: OscFn) -> OscFn:
    basis = a.basis
    return OscFn(basis, {k: c * basis.exponent(k) for k, c in a.terms.items()})


def mean_value(a):
    """Mean value ``lim (1/t) int_0^t a``.

    Only the zero exponent survives averaging, so for an ``OscFn`` this is its
    constant coefficient.  Vectors and matrices are averaged entrywise.
    """
    if isinstance(a, OscFn):
        return a.coefficient(a.basis.zero())
    if isinstance(a, OscVector):
        return np.array([mean_value(c) for c in a], dtype=complex)
    if isinstance(a, OscMatrix):
        return np.array([[mean_value(c) for c in row] for row in a.rows], dtype=complex)
    raise TypeError(f"cannot average {type(a).__name__}")


def evaluate(a: OscFn, t):
    """Evaluate by direct summation; ``t`` may be a scalar or an array.

    Real functions return real values (the imaginary part is below
    ``TAU_ZERO`` by conjugate closure and is discarded).
    """
    t_arr = np.asarray(t, dtype=float)
    out = np.zeros(t_arr.shape, dtype=complex)
    for k, c in a.terms.items():
        mu = a.basis.exponent(k)
        out += c * np.exp(mu * t_arr)
    if a.real:
        out = out.real
    if np.ndim(t) == 0:
        return out[()] if isinstance(out, np.ndarray) else out
    return out


# separation and linear solves ---------------------------------------------------

@dataclass(frozen=True)
class SeparationReport:
    passed: bool
    min_distance: float
    worst_exponent: complex | None
    worst_key: tuple | None
    worst_lambda: complex | None
    delta_min: float

    def __bool__(self):
        return self.passed


def separation_check(fns, lambdas, delta_min: float = DELTA_MIN) -> SeparationReport:
    """Verify ``|mu - lam| >= delta_min`` for all exponents and eigenvalues.

    ``fns`` may be an ``OscFn``, an ``OscVector`` or any iterable of them.
    Failure is reported, never raised.
    """
    lambdas = [complex(x) for x in np.ravel(lambdas)]
    if not lambdas:
        raise ValueError("need at least one eigenvalue")
    if isinstance(fns, OscFn):
        fns = [fns]
    best = (np.inf, None, None, None)
    for fn in fns:
        for key in fn.terms:
            mu = fn.basis.exponent(key)
            for lam in lambdas:
                d = abs(mu - lam)
                if d < best[0]:
                    best = (d, mu, key, lam)
    dist, mu, key, lam = best
    return SeparationReport(bool(dist >= delta_min), float(dist), mu, key, lam, delta_min)


def solve_scalar_linear(lam: complex, f: OscFn, delta_min: float = DELTA_MIN) -> OscFn:
    """Unique in-class solution of ``y' = lam*y + f``.

    Each term ``c exp(mu t)`` maps to ``c/(mu - lam) exp(mu t)``.
    """
    lam = complex(lam)
    terms = {}
    for k, c in f.terms.items():
        mu = f.basis.exponent(k)
        d = mu - lam
        if abs(d) < delta_min:
            raise ResonanceError(k, mu, lam, abs(d))
        terms[k] = c / d
    return OscFn(f.basis, terms)


class OscVector:
    """Immutable column of ``OscFn`` entries over one basis."""

    __slots__ = ("basis", "_entries")

    def __init__(self, entries: Sequence[OscFn], basis: GeneratorBasis | None = None):
        entries = tuple(entries)
        if basis is None:
            if not entries:
                raise ValueError("empty vector needs an explicit basis")
            basis = entries[0].basis
        for e in entries:
            if e.basis != basis:
                raise BasisMismatchError("vector entries use different bases")
        self.basis = basis
        self._entries = entries

    @classmethod
    def zeros(cls, basis, n) -> "OscVector":
        z = OscFn(basis)
        return cls([z] * n, basis)

    @classmethod
    def constant(cls, basis, values) -> "OscVector":
        return cls([OscFn.constant(basis, v) for v in values], basis)

    def __len__(self):
        return len(self._entries)

    def __iter__(self):
        return iter(self._entries)

    def __getitem__(self, i):
        return self._entries[i]

    def __repr__(self):
        return f"OscVector({list(self._entries)})"

    def __add__(self, other: "OscVector"):
        if len(other) != len(self):
            raise ValueError("dimension mismatch")
        return OscVector([a + b for a, b in zip(self, other)], self.basis)

    def __sub__(self, other: "OscVector"):
        if len(other) != len(self):
            raise ValueError("dimension mismatch")
        return OscVector([a - b for a, b in zip(self, other)], self.basis)

    def __neg__(self):
        return OscVector([-a for a in self], self.basis)

    def __mul__(self, scalar):
        """Scale by a number or by a scalar ``OscFn``."""
        return OscVector([a * scalar for a in self], self.basis)

    __rmul__ = __mul__

    def __bool__(self):
        return any(bool(e) for e in self._entries)

    def derivative(self) -> "OscVector":
        return OscVector([differentiate(a) for a in self], self.basis)

    def matmul(self, M) -> "OscVector":
        """``M @ self`` for a constant (possibly complex) matrix ``M``."""
        M = np.asarray(M)
        if M.shape[1] != len(self):
            raise ValueError("dimension mismatch")
        out = []
        for i in range(M.shape[0]):
            acc: dict = {}
            for j, entry in enumerate(self._entries):
                m = M[i, j]
                if m == 0:
                    continue
                for k, c in entry.terms.items():
                    acc[k] = acc.get(k, 0j) + m * c
            out.append(OscFn(self.basis, acc))
        return OscVector(out, self.basis)

    def real_part(self) -> "OscVector":
        return OscVector([a.real_part() for a in self], self.basis)

    def max_coefficient(self) -> float:
        return max((a.max_coefficient() for a in self), default=0.0)

    def mean(self):
        return mean_value(self)

    def __call__(self, t):
        """Evaluate all components; returns shape ``(n,)`` or ``(len(t), n)``."""
        vals = [evaluate(a, t) for a in self]
        if np.ndim(t) == 0:
            return np.array(vals)
        return np.stack(vals, axis=-1)


class OscMatrix:
    """Rectangular array of ``OscFn`` entries (used for Jacobians)."""

    __slots__ = ("basis", "rows")

    def __init__(self, rows: Sequence[Sequence[OscFn]], basis: GeneratorBasis | None = None):
        rows = tuple(tuple(r) for r in rows)
        if not rows or not rows[0]:
            raise ValueError("empty matrix")
        width = len(rows[0])
        if any(len(r) != width for r in rows):
            raise ValueError("ragged matrix")
        self.basis = basis or rows[0][0].basis
        for r in rows:
            for e in r:
                if e.basis != self.basis:
                    raise BasisMismatchError("matrix entries use different bases")
        self.rows = rows

    @classmethod
    def from_columns(cls, cols: Sequence[OscVector]) -> "OscMatrix":
        n = len(cols[0])
        return cls([[c[i] for c in cols] for i in range(n)], cols[0].basis)

    @property
    def shape(self):
        return len(self.rows), len(self.rows[0])

    def similarity_diagonal(self, P) -> list:
        """Diagonal entries of ``inv(P) @ self @ P`` as ``OscFn``."""
        P = np.asarray(P, dtype=complex)
        Pinv = np.linalg.inv(P)
        n = self.shape[0]
        out = []
        for j in range(n):
            acc: dict = {}
            for a in range(n):
                for b in range(n):
                    w = Pinv[j, a] * P[b, j]
                    if w == 0:
                        continue
                    for k, c in self.rows[a][b].terms.items():
                        acc[k] = acc.get(k, 0j) + w * c
            out.append(OscFn(self.basis, acc))
        return out

    def mean(self):
        return mean_value(self)


def triangularize(A, cond_max: float = 1e12):
    """Complex Schur form ``T = Z^H A Z`` with a defectiveness guard.

    Returns ``(T, Z)``.  Raises ``TriangularizationError`` if the eigenvector
    matrix of ``A`` is numerically singular.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise TriangularizationError("A must be square")
    if not np.all(np.isfinite(A)):
        raise TriangularizationError("A has non-finite entries")
    _, V = np.linalg.eig(A)
    if np.linalg.cond(V) > cond_max:
        raise TriangularizationError("A is defective or its eigenvectors are ill-conditioned")
    T, Z = scipy.linalg.schur(A, output="complex")
    return T, Z


def solve_system_linear(A, f: OscVector, delta_min: float = DELTA_MIN) -> OscVector:
    """Unique in-class solution of ``phi' = A phi + f`` for real ``A``.

    Works in Schur coordinates ``z = Z^H phi`` and back-substitutes from the
    last component upward, then returns the real part of ``Z z``.
    """
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    if len(f) != n:
        raise ValueError("dimension mismatch between A and f")
    T, Z = triangularize(A)
    h = f.matmul(Z.conj().T)
    lam = np.diag(T)
    report = separation_check(h, lam, delta_min)
    if not report.passed:
        raise ResonanceError(report.worst_key, report.worst_exponent,
                             report.worst_lambda, report.min_distance)
    z = [None] * n
    for i in range(n - 1, -1, -1):
        rhs = h[i]
        for j in range(i + 1, n):
            if T[i, j] != 0:
                rhs = rhs + z[j] * complex(T[i, j])
        z[i] = solve_scalar_linear(lam[i], rhs, delta_min)
    phi = OscVector(z, f.basis).matmul(Z)
    return phi.real_part()


def linear_residual(A, phi: OscVector, f: OscVector) -> OscVector:
    """Symbolic ``phi' - A phi - f``."""
    return phi.derivative() - phi.matmul(np.asarray(A, dtype=float)) - f
