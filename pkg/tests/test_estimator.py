import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from asymptex.estimator import AsymptoticExpansion, DecayVerifier
from asymptex.expansion import residual_series, truncated_sum


def test_params_and_clone():
    est = AsymptoticExpansion(k=2)
    assert est.get_params() == {"k": 2}
    twin = clone(est.set_params(k=3))
    assert twin.k == 3 and not hasattr(twin, "expansion_")
    ver = DecayVerifier(k=3, mode="simple", varpi=1.1, display_k=1)
    assert clone(ver).get_params() == ver.get_params()


def test_predict_matches_truncated_sum(periodic):
    est = AsymptoticExpansion(k=2).fit(periodic)
    t = np.geomspace(100, 1e4, 25)
    s = truncated_sum(est.expansion_, 2)
    assert est.predict(t).shape == (25, 2)
    assert np.allclose(est.predict(t), s(t), atol=1e-13)
    assert est.ranks_ == [1, 2] and est.n_features_out_ == 2


def test_residual_matches_series(periodic):
    est = AsymptoticExpansion(k=2).fit(periodic)
    t = np.array([150.0, 1e3])
    g = residual_series(periodic, est.expansion_, 2)
    assert np.allclose(est.residual(t), g.evaluate(t), atol=1e-14)


def test_not_fitted_and_bad_input(periodic):
    with pytest.raises(NotFittedError):
        AsymptoticExpansion().predict([100.0])
    est = AsymptoticExpansion(k=1).fit(periodic)
    with pytest.raises(ValueError):
        est.predict([50.0])
    with pytest.raises(ValueError):
        est.predict([np.inf])
    with pytest.raises(ValueError):
        AsymptoticExpansion(k=-1).fit(periodic)
    with pytest.raises(TypeError):
        AsymptoticExpansion().fit("not a problem")


def test_decay_verifier(periodic):
    ver = DecayVerifier(k=1, t_max=3e3, n_windows=8).fit(periodic)
    assert ver.passed_
    assert ver.score() == 1.0
    assert ver.parameters_.count == 2
    assert np.allclose(ver.gamma_.gamma[1], [1.0, 1.0], atol=1e-12)
    with pytest.raises(NotFittedError):
        DecayVerifier().score()
