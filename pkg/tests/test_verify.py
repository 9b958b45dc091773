import math

import numpy as np
import pytest

from asymptex.expansion import PolyNonlinearity, Problem, build_expansion
from asymptex.fixtures import (
    almost_periodic_example,
    linear_example,
    periodic_example,
    standard_eps,
)
from asymptex.osc import GeneratorBasis, OscFn, OscVector
from asymptex.verify import (
    SpectrumError,
    check_mode,
    claimed_exponent,
    divergent,
    error_check,
    error_exponent,
    fit_decay,
    gamma_first_order,
    parameter_count,
    residual,
    residual_consistency,
    sample_times,
    window_edges,
)

EPS1 = standard_eps()[0]
P = GeneratorBasis.periodic()


def _times():
    return sample_times(1e2, 1e5, 12, 200)


def test_window_edges_geometric():
    edges = window_edges(1e2, 1e5, 12)
    assert edges.size == 13
    assert np.allclose(np.diff(np.log(edges)), np.log(1e3) / 12)


def test_fit_decay_pure_power():
    t = _times()
    rep = fit_decay(t, t ** -2.0, EPS1, 2)
    assert abs(rep.slope - 2.0) < 1e-3
    assert rep.passed and rep.worst_growth <= 1.0 + 1e-9


def test_fit_decay_oscillating_mixture():
    t = _times()
    v = np.abs(np.cos(t)) / t ** 2 + 1 / (t ** 2 * np.log(t))
    rep = fit_decay(t, v, EPS1, 2)
    assert rep.passed
    assert 1.85 <= rep.slope <= 2.3


def test_fit_decay_rejects_slower_decay():
    t = _times()
    rep = fit_decay(t, t ** -1.5, EPS1, 2)
    assert not rep.slope_ok and not rep.passed
    assert rep.worst_growth > 1.25


def test_fit_decay_rejects_late_growth():
    t = _times()
    v = t ** -2.0 * np.where(t > 3e4, 4.0, 1.0)
    rep = fit_decay(t, v, EPS1, 2)
    assert not rep.trend_ok and not rep.passed


def test_fit_decay_all_zero():
    t = _times()
    rep = fit_decay(t, np.zeros((t.size, 2)), EPS1, 3)
    assert rep.passed and rep.slope == math.inf


def test_fit_decay_input_errors():
    t = _times()
    with pytest.raises(ValueError):
        fit_decay(t, t ** -2.0, EPS1, 2, n_windows=5)
    with pytest.raises(ValueError):
        fit_decay(t[::-1], t ** -2.0, EPS1, 2)
    with pytest.raises(ValueError):
        fit_decay(t, np.full(t.size, np.nan), EPS1, 2)


def test_residual_slopes(periodic, periodic_k3):
    slopes = []
    for k in (1, 2, 3):
        res = residual(periodic, periodic_k3, k)
        assert res.report.q == claimed_exponent(periodic_k3, k) == k + 1
        assert res.report.passed, res.report.summary()
        slopes.append(res.report.slope)
    assert all(b - a >= 0.8 for a, b in zip(slopes, slopes[1:]))


def test_residual_before_t0(periodic, periodic_k3):
    with pytest.raises(ValueError):
        residual(periodic, periodic_k3, 1, t_samples=np.linspace(50, 1e3, 100))


def test_residual_consistency(periodic_k3, almost_periodic_k3):
    for e in (periodic_k3, almost_periodic_k3):
        for k in (1, 2, 3):
            assert residual_consistency(e, 1e3, k) < 1e-6


def test_error_check_short_horizon(periodic, periodic_k3):
    chk = error_check(periodic, periodic_k3, 2, t_max=3e3, n_windows=8, per_window=200)
    assert chk.q == 3
    assert chk.passed, chk.report.summary()
    assert chk.report.slope >= 2.85


def test_error_check_false_claim(periodic, periodic_k3):
    chk = error_check(periodic, periodic_k3, 1, t_max=3e3, n_windows=8, per_window=200,
                      q_override=3)
    assert not chk.passed


def test_error_check_linear_is_exact():
    f = OscVector([OscFn.sin(P, (1,)), OscFn.cos(P, (1,))], P)
    p = linear_example(forcing=f)
    e = build_expansion(p, 0)
    chk = error_check(p, e, 0, t_max=2e3, n_windows=8, per_window=100)
    assert chk.passed
    assert np.max(np.abs(chk.trajectories[0].y)) < 1e-12


def test_error_exponent_modes(periodic_k3):
    assert error_exponent(periodic_k3, 3, "npi") == 4
    assert error_exponent(periodic_k3, 3, "simple", varpi=1.1) == pytest.approx(2.9)
    assert error_exponent(periodic_k3, 3, "simple", varpi=1.1, display_k=1) == 2


def test_check_mode(periodic, periodic_k3):
    check_mode(periodic, "npi")
    check_mode(periodic, "simple", periodic_k3, 3, varpi=1.1)
    with pytest.raises(SpectrumError):
        check_mode(periodic, "simple", periodic_k3, 3)
    with pytest.raises(SpectrumError):
        check_mode(periodic, "simple", periodic_k3, 0, varpi=1.1)
    with pytest.raises(SpectrumError):
        check_mode(linear_example(A=((0.0, 1.0), (-1.0, 0.0))), "npi")
    with pytest.raises(SpectrumError):
        check_mode(linear_example(A=((-1.0, 0.0), (0.0, -1.0))), "simple", varpi=1.0)
    with pytest.raises(ValueError):
        check_mode(periodic, "bogus")


def test_gamma_almost_periodic(almost_periodic):
    g = gamma_first_order(almost_periodic)
    assert np.allclose(g.gamma[1], [0.5, 0.5], atol=1e-12)
    assert np.allclose(g.gamma[2], [-0.3, -0.3], atol=1e-12)
    assert g.as_matrix().shape == (2, 2)


def test_gamma_periodic(periodic):
    g = gamma_first_order(periodic)
    assert np.allclose(g.gamma[1], [1.0, 1.0], atol=1e-12)
    assert np.allclose(g.gamma[2], [0.0, 0.25], atol=1e-12)


def test_gamma_zero_nonlinearity():
    g = gamma_first_order(linear_example())
    for col in g.gamma.values():
        assert np.all(col == 0)


def _scaled_identity_problem(A, c):
    eps = standard_eps()
    n = len(A)
    nls = []
    for l in (1, 2):
        terms = {}
        for i in range(n):
            alpha = tuple(1 if j == i else 0 for j in range(n))
            terms[alpha] = OscVector([OscFn.constant(P, c if j == i else 0.0) for j in range(n)], P)
        nls.append(PolyNonlinearity(l, terms, n, P))
    return Problem(np.array(A), OscVector.zeros(P, n), eps, nls)


def test_gamma_scalar_multiple_of_identity():
    A = np.array([[-1.0, 0.7], [0.2, -3.0]])
    g = gamma_first_order(_scaled_identity_problem(A, 0.8))
    for col in g.gamma.values():
        assert np.allclose(col, 0.8, atol=1e-12)


def test_gamma_invariant_under_eigenvector_scaling(almost_periodic):
    g = gamma_first_order(almost_periodic)
    P0 = g.P0 @ np.diag([3.0 - 1.0j, -0.25])
    h = gamma_first_order(almost_periodic, P0=P0)
    for l in g.gamma:
        assert np.allclose(g.gamma[l], h.gamma[l], atol=1e-9)


def test_gamma_ill_conditioned():
    A = np.array([[-1.0, 1.0], [0.0, -1.0 - 1e-9]])
    with pytest.raises(SpectrumError):
        gamma_first_order(linear_example(A=A))


def test_divergent_rule():
    assert divergent([10, 40, 60])
    assert not divergent([10, 60, 55])
    assert not divergent([1, 2, 3])
    with pytest.raises(ValueError):
        divergent([1, 2])


def test_parameter_count_npi():
    assert parameter_count(periodic_example()).count == 2
    assert parameter_count(periodic_example(A=((1.0, 0.0), (0.0, -2.0)))).count == 1


def test_parameter_count_simple(almost_periodic, almost_periodic_k3):
    pc = parameter_count(almost_periodic, mode="simple", e=almost_periodic_k3, k=3, varpi=1.1)
    assert pc.count == 2
    with pytest.raises(ValueError):
        parameter_count(almost_periodic, mode="simple", e=almost_periodic_k3, k=3, varpi=2.5)
    with pytest.raises(ValueError):
        parameter_count(almost_periodic, mode="simple")


def test_parameter_count_simple_unstable_direction():
    p = almost_periodic_example(A=((0.5, 0.0), (0.0, -2.0)))
    e = build_expansion(p, 1)
    pc = parameter_count(p, mode="simple", e=e, k=1, varpi=1.0)
    assert pc.count == 1
    assert pc.verdicts == [False, True] or pc.verdicts == [True, False]
