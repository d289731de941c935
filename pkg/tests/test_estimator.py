import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from grnet import GRNetSaliency
from grnet._validation import check_masks, check_rgbd, samples_to_stack, stack_to_samples
from grnet.data import SynthSpec, generate_synthetic


@pytest.fixture(scope="module")
def xy():
    return samples_to_stack(generate_synthetic(SynthSpec(n_samples=4, image_size=32, seed=0)))


@pytest.fixture(scope="module")
def fitted(xy):
    X, y = xy
    return GRNetSaliency(plan="tiny", input_size=32, max_steps=3).fit(X, y)


def test_get_params_and_clone():
    est = GRNetSaliency(preset="en_fpn", max_steps=7)
    params = est.get_params()
    assert params["preset"] == "en_fpn" and params["max_steps"] == 7
    assert clone(est).get_params() == params
    est.set_params(threshold=0.3)
    assert est.threshold == 0.3


def test_fit_predict_shapes(fitted, xy):
    X, y = xy
    proba = fitted.predict_proba(X)
    assert proba.shape == y.shape
    assert proba.min() >= 0 and proba.max() <= 1
    pred = fitted.predict(X)
    assert pred.dtype == np.uint8 and set(np.unique(pred)) <= {0, 1}
    assert np.array_equal(pred, (proba >= 0.5).astype(np.uint8))
    assert len(fitted.loss_curve_) == 3
    assert fitted.n_features_in_ == 4


def test_predict_resizes_back(fitted):
    X = np.random.default_rng(0).random((2, 64, 64, 4))
    assert fitted.predict_proba(X).shape == (2, 64, 64)


def test_gate_values_and_score(fitted, xy):
    X, y = xy
    gates = fitted.gate_values(X)
    assert len(gates) == 4 and set(gates[0]) == {"Ga1", "Ga2", "Ga3", "Gb1", "Gb2", "Gb3", "Gr", "Gd"}
    assert 0.0 <= fitted.score(X, y) <= 1.0


def test_fit_is_deterministic(fitted, xy):
    X, y = xy
    again = clone(fitted).fit(X, y)
    assert again.checkpoint_.equals(fitted.checkpoint_)


def test_not_fitted():
    with pytest.raises(NotFittedError):
        GRNetSaliency().predict(np.zeros((1, 32, 32, 4)))


def test_input_validation():
    with pytest.raises(ValueError):
        check_rgbd(np.zeros((1, 32, 32, 3)))
    with pytest.raises(ValueError):
        check_rgbd(np.full((1, 32, 32, 4), 2.0))
    with pytest.raises(ValueError):
        check_rgbd(np.full((1, 32, 32, 4), np.nan))
    with pytest.raises(ValueError):
        check_rgbd(np.zeros((0, 32, 32, 4)))
    X = check_rgbd(np.zeros((32, 32, 4)))
    assert X.shape == (1, 32, 32, 4)
    with pytest.raises(ValueError):
        check_masks(np.zeros((1, 16, 16)), X)
    with pytest.raises(ValueError):
        check_masks(np.full((1, 32, 32), 0.5), X)
    with pytest.raises(ValueError):
        GRNetSaliency(plan="huge").fit(X, np.zeros((1, 32, 32)))


def test_stack_roundtrip(xy):
    X, y = xy
    X2, y2 = samples_to_stack(stack_to_samples(X, y))
    assert np.array_equal(X, X2) and np.array_equal(y, y2)
