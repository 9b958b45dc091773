"""The three worked example systems, with concrete data.

All use ``eps_1 = 1/t``, ``eps_2 = 1/(t ln t)`` with ranks ``(1, 1)``.
"""

from __future__ import annotations

import math

import numpy as np

from .expansion import PolyNonlinearity, Problem
from .osc import GeneratorBasis, OscFn, OscVector
from .ranks import EpsSpec

SQRT2 = math.sqrt(2.0)


def standard_eps():
    return [EpsSpec.power_log(1, 1), EpsSpec.power_log(2, 1, logs=(-1,))]


def _vec(basis, *entries):
    return OscVector([e if isinstance(e, OscFn) else OscFn.constant(basis, e) for e in entries], basis)


def periodic_example(A=((-1.0, 0.0), (0.0, -2.0)), t0=100.0, a=1.0) -> Problem:
    """Periodic class (period ``2 pi``).

    ``f = (sin t, cos t)``, ``g1 = cos t``, ``g2 = sin t``;
    ``f_1 = (y1 + y2^2 g1, y2)``, ``f_2 = (y2, y1 + y1 y2 g2)``.
    """
    B = GeneratorBasis.periodic(2 * np.pi)
    one = (1,)
    sin_t, cos_t = OscFn.sin(B, one), OscFn.cos(B, one)
    f = _vec(B, sin_t, cos_t)
    nl1 = PolyNonlinearity(1, {
        (1, 0): _vec(B, 1.0, 0.0),
        (0, 2): _vec(B, cos_t, 0.0),
        (0, 1): _vec(B, 0.0, 1.0),
    }, 2, B)
    nl2 = PolyNonlinearity(2, {
        (0, 1): _vec(B, 1.0, 0.0),
        (1, 0): _vec(B, 0.0, 1.0),
        (1, 1): _vec(B, 0.0, sin_t),
    }, 2, B)
    return Problem(np.array(A), f, standard_eps(), [nl1, nl2], a=a, t0=t0, name="periodic")


def decaying_example(m0=(1.0, -0.5), m1=(0.3, 0.2), m2=(-0.4, 0.6),
                     A=((-1.0, 0.0), (0.0, -2.0)), forcing_keys=((0, 1, 0, 0), (0, 0, 1, 0)),
                     t0=100.0, a=1.0) -> Problem:
    """Exponential-sum class over rates ``1, sqrt 2, e, pi``.

    ``f = m0 + (e^{-w1 t}, e^{-w2 t})`` with ``w1, w2`` given as lattice keys
    in ``forcing_keys``, ``f_1 = m1 + (y1 + y2^2 e^{-pi t}, y2)``,
    ``f_2 = m2 + (y1, y2 + y1 y2 e^{-sqrt2 t})``.

    The default rates are ``sqrt 2`` and ``e``.  With ``A = diag(-1, -2)``
    a forcing rate of exactly 1 would sit on an eigenvalue, so the default
    avoids the generator 1 entirely; the nonnegative combinations of
    ``sqrt 2, e, pi`` stay at least 0.41 away from ``{-1, -2}``.
    """
    B = GeneratorBasis.decaying((1.0, SQRT2, math.e, math.pi))
    e_1 = OscFn.exp(B, forcing_keys[0])
    e_2 = OscFn.exp(B, forcing_keys[1])
    e_pit = OscFn.exp(B, (0, 0, 0, 1))
    e_s2t = OscFn.exp(B, (0, 1, 0, 0))
    f = _vec(B, e_1 + m0[0], e_2 + m0[1])
    nl1 = PolyNonlinearity(1, {
        (0, 0): _vec(B, m1[0], m1[1]),
        (1, 0): _vec(B, 1.0, 0.0),
        (0, 2): _vec(B, e_pit, 0.0),
        (0, 1): _vec(B, 0.0, 1.0),
    }, 2, B)
    nl2 = PolyNonlinearity(2, {
        (0, 0): _vec(B, m2[0], m2[1]),
        (1, 0): _vec(B, 1.0, 0.0),
        (0, 1): _vec(B, 0.0, 1.0),
        (1, 1): _vec(B, 0.0, e_s2t),
    }, 2, B)
    return Problem(np.array(A), f, standard_eps(), [nl1, nl2], a=a, t0=t0, name="decaying")


def almost_periodic_example(gamma1=0.5, gamma2=-0.3, A=((-1.0, 0.0), (0.0, -2.0)),
                            t0=100.0, a=1.0) -> Problem:
    """Almost periodic class over frequencies ``1, sqrt 2, e, pi``.

    ``f = (sin t, cos e t)``,
    ``f_1 = (gamma1 y1 + y2^2 cos pi t, gamma1 y2)``,
    ``f_2 = (gamma2 y1, gamma2 y2 + y1 y2 sin sqrt2 t)``.
    """
    B = GeneratorBasis.almost_periodic((1.0, SQRT2, math.e, math.pi))
    f = _vec(B, OscFn.sin(B, (1, 0, 0, 0)), OscFn.cos(B, (0, 0, 1, 0)))
    nl1 = PolyNonlinearity(1, {
        (1, 0): _vec(B, gamma1, 0.0),
        (0, 2): _vec(B, OscFn.cos(B, (0, 0, 0, 1)), 0.0),
        (0, 1): _vec(B, 0.0, gamma1),
    }, 2, B)
    nl2 = PolyNonlinearity(2, {
        (1, 0): _vec(B, gamma2, 0.0),
        (0, 1): _vec(B, 0.0, gamma2),
        (1, 1): _vec(B, 0.0, OscFn.sin(B, (0, 1, 0, 0))),
    }, 2, B)
    return Problem(np.array(A), f, standard_eps(), [nl1, nl2], a=a, t0=t0, name="almost_periodic")


def linear_example(A=((-1.0, 0.0), (0.0, -2.0)), forcing=None, t0=100.0, a=10.0) -> Problem:
    """No nonlinearity: ``y' = A y + f``; ``forcing`` defaults to zero."""
    B = GeneratorBasis.periodic(2 * np.pi)
    n = len(A)
    f = forcing if forcing is not None else OscVector.zeros(B, n)
    nls = [PolyNonlinearity(l, {}, n, f.basis) for l in (1, 2)]
    return Problem(np.array(A), f, standard_eps(), nls, a=a, t0=t0, name="linear")
