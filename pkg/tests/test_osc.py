import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from asymptex.osc import (
    BasisMismatchError,
    GeneratorBasis,
    LatticeError,
    OscFn,
    OscMatrix,
    OscVector,
    ResonanceError,
    TriangularizationError,
    differentiate,
    evaluate,
    linear_residual,
    mean_value,
    ring_ops,
    separation_check,
    solve_scalar_linear,
    solve_system_linear,
    triangularize,
)

SQRT2 = math.sqrt(2.0)
P = GeneratorBasis.periodic()
AP = GeneratorBasis.almost_periodic((1.0, SQRT2, math.e, math.pi))
DEC = GeneratorBasis.decaying((1.0, SQRT2, math.e, math.pi))


def test_basis_validation():
    with pytest.raises(ValueError):
        GeneratorBasis((0.5 + 1j,))
    with pytest.raises(ValueError):
        GeneratorBasis((1j, 1j))
    with pytest.raises(ValueError):
        GeneratorBasis((0j,))
    assert P.signed == (True,)
    assert DEC.signed == (False,) * 4


def test_lattice_sign_enforced():
    with pytest.raises(LatticeError):
        OscFn.exp(DEC, (-1, 0, 0, 0))


def test_add_conjugate_pair_is_cosine():
    f = OscFn.exp(P, (1,)) + OscFn.exp(P, (-1,))
    assert dict(f.terms) == {(1,): 1, (-1,): 1}
    assert f.real
    t = np.linspace(0, 10, 7)
    assert np.allclose(f(t), 2 * np.cos(t))


def test_incommensurate_sine_product():
    f = OscFn.sin(AP, (1, 0, 0, 0)) * OscFn.sin(AP, (0, 1, 0, 0))
    assert len(f) == 4
    t = np.linspace(0, 30, 40)
    assert np.allclose(f(t), np.sin(t) * np.sin(SQRT2 * t), atol=1e-14)


def test_decaying_product_exponent():
    f = OscFn.exp(DEC, (1, 0, 0, 0)) * OscFn.exp(DEC, (0, 0, 1, 0))
    assert list(f.terms) == [(1, 0, 1, 0)]
    assert f.exponents()[0] == pytest.approx(-(1 + math.e))
    t = np.linspace(0.1, 3, 10)
    assert np.allclose(f(t), np.exp(-t) * np.exp(-math.e * t), rtol=1e-14)


def test_basis_mismatch():
    with pytest.raises(BasisMismatchError):
        OscFn.constant(P, 1.0) + OscFn.constant(AP, 1.0)


def test_ring_ops_kinds():
    a, b = OscFn.sin(P, (1,)), OscFn.cos(P, (2,))
    assert ring_ops(a, b, "add").almost_equal(a + b)
    assert ring_ops(a, b, "mul").almost_equal(a * b)
    assert ring_ops(a, kind="scale", scalar=3.0).almost_equal(a * 3.0)
    assert ring_ops(a, kind="negate").almost_equal(-a)
    with pytest.raises(ValueError):
        ring_ops(a, b, "divide")


def test_differentiate_examples():
    assert not differentiate(OscFn.constant(P, 4.0))
    d = differentiate(OscFn.sin(P, (1,)))
    assert d.almost_equal(OscFn.cos(P, (1,)))
    assert dict(d.terms) == pytest.approx({(1,): 0.5, (-1,): 0.5})
    f = OscFn.exp(DEC, (0, 0, 0, 1))
    df = differentiate(f)
    for t in (1.0, 2.0, 5.0):
        h = 1e-6
        fd = (f(t + h) - f(t - h)) / (2 * h)
        assert abs(fd - df(t)) / abs(df(t)) < 1e-6


def test_mean_value_examples():
    assert mean_value(OscFn.sin(P, (1,))) == 0
    assert mean_value(OscFn.exp(DEC, (1, 0, 0, 0)) + 2.5) == 2.5
    M = OscMatrix([[OscFn.constant(P, 1.0), OscFn.sin(P, (1,))],
                   [OscFn.cos(P, (1,)) + 3, OscFn.constant(P, 0.0)]])
    assert np.allclose(mean_value(M), [[1, 0], [3, 0]])


def test_evaluate_examples():
    assert evaluate(OscFn(P), 3.0) == 0
    f = OscFn.sin(AP, (1, 0, 0, 0)) + OscFn.sin(AP, (0, 1, 0, 0))
    assert evaluate(f, 0.0) == 0
    assert evaluate(OscFn.exp(DEC, (1, 0, 0, 0)), 1.0) == pytest.approx(0.36787944117144233)
    assert isinstance(evaluate(f, 1.0), float)


def test_separation_examples():
    rep = separation_check(OscFn.exp(P, (1,)), [-1])
    assert rep.passed and rep.min_distance == pytest.approx(SQRT2)
    rep = separation_check(OscFn.exp(P, (1,)), [1j])
    assert not rep.passed and rep.min_distance == 0 and rep.worst_key == (1,)


def test_separation_almost_periodic_lattice_scan():
    # all lattice points with |k_j| <= 3 against the eigenvalues and their differences
    import itertools
    terms = {k: 1.0 for k in itertools.product(range(-3, 4), repeat=4)}
    f = OscFn(AP, terms)
    lam = np.array([-1.0, -2.0])
    diffs = [lam[0] - lam[1], lam[1] - lam[0]]
    assert separation_check(f, list(lam) + diffs, 1e-6).passed


def test_solve_scalar_examples():
    y = solve_scalar_linear(-1, OscFn.exp(P, (1,)))
    assert y.coefficient((1,)) == pytest.approx(1 / (1j + 1))
    assert not solve_scalar_linear(-1, OscFn(P))
    y = solve_scalar_linear(-1, OscFn.sin(P, (1,)))
    t = np.linspace(0, 20, 50)
    assert np.allclose(y(t), (np.sin(t) - np.cos(t)) / 2, atol=1e-15)
    assert y.real


def test_solve_scalar_resonance():
    with pytest.raises(ResonanceError) as info:
        solve_scalar_linear(1j, OscFn.exp(P, (1,)))
    assert info.value.key == (1,)


def test_solve_scalar_matches_numerical_integration():
    from scipy.integrate import solve_ivp
    y = solve_scalar_linear(-1, OscFn.sin(P, (1,)))
    sol = solve_ivp(lambda t, x: -x + np.sin(t), (0, 10), [y(0.0)], rtol=1e-11, atol=1e-13,
                    t_eval=np.linspace(0, 10, 11))
    assert np.allclose(sol.y[0], y(sol.t), atol=1e-9)


def test_solve_system_componentwise():
    A = np.diag([-1.0, -2.0])
    f = OscVector([OscFn.sin(AP, (1, 0, 0, 0)), OscFn.cos(AP, (0, 0, 1, 0))])
    phi = solve_system_linear(A, f)
    t = np.linspace(0, 50, 20)
    assert linear_residual(A, phi, f).max_coefficient() < 1e-10
    d = phi.derivative()(t) - phi(t) @ A.T - f(t)
    assert np.abs(d).max() < 1e-10
    assert phi[0].almost_equal(solve_scalar_linear(-1, f[0]))


def test_solve_system_constant_and_zero():
    A = np.array([[-1.0, 0.3], [0.2, -2.0]])
    m0 = np.array([1.0, -0.5])
    phi = solve_system_linear(A, OscVector.constant(P, m0))
    assert np.allclose(phi.mean(), -np.linalg.solve(A, m0), atol=1e-14)
    assert not solve_system_linear(A, OscVector.zeros(P, 2))


def test_solve_system_nonnormal_and_complex_spectrum():
    A = np.array([[0.0, 1.0], [-5.0, -2.0]])  # eigenvalues -1 +- 2i
    f = OscVector([OscFn.sin(P, (1,)), OscFn.cos(P, (3,)) + 0.5])
    phi = solve_system_linear(A, f)
    assert linear_residual(A, phi, f).max_coefficient() < 1e-10
    assert all(fn.real for fn in phi)


def test_defective_matrix_rejected():
    with pytest.raises(TriangularizationError):
        triangularize(np.array([[-1.0, 1.0], [0.0, -1.0]]))


def test_fourier_coefficient_property():
    f = OscFn(AP, {(1, 0, 0, 0): 0.3 - 0.1j, (-1, 0, 0, 0): 0.3 + 0.1j, (0, 2, -1, 0): 0.7})
    g = f * OscFn.exp(AP, (0, -2, 1, 0))
    assert mean_value(g) == pytest.approx(0.7)


# random ring-law checks ---------------------------------------------------------------------

keys = st.tuples(st.integers(-2, 2), st.integers(-1, 1))
coefs = st.complex_numbers(max_magnitude=3, allow_nan=False, allow_infinity=False)
AP2 = GeneratorBasis.almost_periodic((1.0, SQRT2))
small_fn = st.dictionaries(keys, coefs, max_size=4).map(lambda d: OscFn(AP2, d))


def _eq(a, b, tol=1e-10):
    return (a - b).max_coefficient() <= tol * max(1.0, a.max_coefficient(), b.max_coefficient())


@settings(max_examples=60, deadline=None)
@given(small_fn, small_fn, small_fn)
def test_ring_laws(a, b, c):
    assert _eq(a + b, b + a)
    assert _eq(a * b, b * a)
    assert _eq((a + b) + c, a + (b + c))
    assert _eq((a * b) * c, a * (b * c))
    assert _eq(a * (b + c), a * b + a * c)


@settings(max_examples=60, deadline=None)
@given(small_fn, small_fn)
def test_leibniz_rule(a, b):
    assert _eq(differentiate(a * b), differentiate(a) * b + a * differentiate(b))


@settings(max_examples=30, deadline=None)
@given(small_fn, small_fn)
def test_pointwise_agreement(a, b):
    t = np.random.default_rng(0).uniform(0, 50, 32)
    for sym, num in ((a + b, a(t) + b(t)), (a * b, a(t) * b(t))):
        scale = max(1.0, np.abs(num).max())
        assert np.abs(sym(t) - num).max() <= 1e-10 * scale
