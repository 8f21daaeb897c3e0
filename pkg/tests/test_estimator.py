import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from payguard.estimator import GanVaeAnomalyDetector
from payguard.rng import DeterministicRng


def _toy_data(seed=0, n_normal=300, n_anom=30):
    rng = DeterministicRng(seed)
    normal = rng.standard_normal((n_normal, 5))
    anomalies = rng.standard_normal((n_anom, 5)) * 0.5 + 6.0
    X = np.vstack([normal, anomalies])
    y = np.concatenate([np.zeros(n_normal, int), np.ones(n_anom, int)])
    return X, y


FAST = dict(epochs=2, batch_size=64, random_state=0)


def test_get_set_params_and_clone():
    est = GanVaeAnomalyDetector(alpha=0.7, epochs=5)
    params = est.get_params()
    assert params["alpha"] == 0.7 and params["epochs"] == 5
    est2 = clone(est).set_params(alpha=0.2)
    assert est2.get_params()["alpha"] == 0.2
    assert est.alpha == 0.7  # clone is independent


def test_unfitted_predict_raises():
    with pytest.raises(NotFittedError):
        GanVaeAnomalyDetector().predict(np.zeros((2, 5)))


def test_fit_predict_separates_obvious_anomalies():
    X, y = _toy_data()
    est = GanVaeAnomalyDetector(**FAST).fit(X, y)
    preds = est.predict(X)
    assert set(np.unique(preds)) <= {0, 1}
    # gross outliers score higher than typical points
    scores = est.decision_function(X)
    assert np.median(scores[y == 1]) > np.median(scores[y == 0])
    assert preds[y == 1].mean() > 0.8
    assert preds[y == 0].mean() < 0.2


def test_score_samples_is_negated_decision():
    X, y = _toy_data(seed=1)
    est = GanVaeAnomalyDetector(**FAST).fit(X, y)
    np.testing.assert_array_equal(est.score_samples(X), -est.decision_function(X))


def test_unlabeled_fit_uses_default_threshold():
    X, _ = _toy_data(seed=2)
    est = GanVaeAnomalyDetector(**FAST).fit(X)
    assert est.threshold_ == 0.5


def test_explicit_threshold_respected():
    X, y = _toy_data(seed=3)
    est = GanVaeAnomalyDetector(threshold=0.9, **FAST).fit(X, y)
    assert est.threshold_ == 0.9


def test_deterministic_given_random_state():
    X, y = _toy_data(seed=4)
    a = GanVaeAnomalyDetector(**FAST).fit(X, y)
    b = GanVaeAnomalyDetector(**FAST).fit(X, y)
    np.testing.assert_array_equal(a.decision_function(X), b.decision_function(X))
    assert a.threshold_ == b.threshold_


def test_model_variants_fit():
    X, y = _toy_data(seed=5)
    for model in ("gan", "vae", "joint"):
        est = GanVaeAnomalyDetector(model=model, **FAST).fit(X, y)
        assert est.decision_function(X).shape == (len(X),)


def test_rejects_unknown_model():
    X, _ = _toy_data()
    with pytest.raises(ValueError):
        GanVaeAnomalyDetector(model="rnn", **FAST).fit(X)


def test_feature_count_checked_at_predict():
    X, y = _toy_data(seed=6)
    est = GanVaeAnomalyDetector(**FAST).fit(X, y)
    with pytest.raises(ValueError):
        est.predict(np.zeros((3, 7)))
