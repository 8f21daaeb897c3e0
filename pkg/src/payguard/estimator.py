"""Scikit-learn style estimator facade over the GAN-VAE detector.

Wraps training, scoring and threshold calibration behind fit / predict /
decision_function so the detector composes with sklearn pipelines and
model-selection tooling. Input is a numeric feature matrix; use the
payguard.data encoding helpers to turn transaction records into one.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .networks import ModelBundle
from .rng import DeterministicRng
from .scoring import ScoreWeights, calibrate_threshold, fit_recon_scale, score_batch
from .training import TrainConfig, train_gan, train_joint, train_vae

_TRAINERS = {"gan": train_gan, "vae": train_vae, "joint": train_joint}


class GanVaeAnomalyDetector(BaseEstimator):
    """Anomaly detector mixing adversarial and reconstruction evidence.

    Parameters
    ----------
    model : {"joint", "gan", "vae"}
        Which networks are trained. "joint" interleaves adversarial updates
        with lambda-weighted VAE updates.
    alpha : float in [0, 1]
        Weight on discriminator evidence in the final score; the remainder
        goes to normalized reconstruction error.
    lam : float
        Weight of the variational loss inside joint training.
    threshold : float or None
        Alarm threshold on the anomaly score. If None, fit() calibrates it
        by max-F1 when labels are passed, else uses 0.5.
    random_state : int
        Seed for initialization, shuffling and latent draws; runs are
        fully reproducible.
    """

    def __init__(self, model="joint", alpha=0.5, lam=1.0, epochs=3,
                 batch_size=128, lr_d=2e-4, lr_g=2e-4, lr_vae=1e-3,
                 d_steps_per_g_step=3, latent_dim=8,
                 generator_objective="non-saturating", threshold=None,
                 random_state=0):
        self.model = model
        self.alpha = alpha
        self.lam = lam
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr_d = lr_d
        self.lr_g = lr_g
        self.lr_vae = lr_vae
        self.d_steps_per_g_step = d_steps_per_g_step
        self.latent_dim = latent_dim
        self.generator_objective = generator_objective
        self.threshold = threshold
        self.random_state = random_state

    def _config(self) -> TrainConfig:
        return TrainConfig(
            epochs=self.epochs, batch_size=self.batch_size, lr_d=self.lr_d,
            lr_g=self.lr_g, lr_vae=self.lr_vae, lam=self.lam,
            d_steps_per_g_step=self.d_steps_per_g_step, seed=self.random_state,
            generator_objective=self.generator_objective)

    def fit(self, X, y=None):
        """Train on X; rows with y == 1 are excluded from generative
        training (they are the anomalies) and used for calibration."""
        X = check_array(X, dtype=np.float64)
        if self.model not in _TRAINERS:
            raise ValueError(f"model must be one of {sorted(_TRAINERS)}")
        y_arr = None
        if y is not None:
            y_arr = np.asarray(y).astype(bool)
            if y_arr.shape[0] != X.shape[0]:
                raise ValueError("X and y length mismatch")
        normal = X if y_arr is None else X[~y_arr]
        if len(normal) == 0:
            raise ValueError("no normal rows to train on")
        bundle = ModelBundle.create(d_x=X.shape[1], d_z=self.latent_dim,
                                    rng=DeterministicRng(self.random_state))
        self.bundle_, self.trace_ = _TRAINERS[self.model](
            bundle, normal, self._config())
        self.weights_ = ScoreWeights(
            alpha=self.alpha, recon_scale=fit_recon_scale(self.bundle_, normal))
        if self.threshold is not None:
            self.threshold_ = float(self.threshold)
        elif y_arr is not None and y_arr.any() and not y_arr.all():
            values, _, _ = score_batch(self.bundle_, self.weights_, X)
            cal = calibrate_threshold(list(zip(values.tolist(), y_arr.tolist())))
            self.threshold_ = cal.theta
        else:
            self.threshold_ = 0.5
        self.n_features_in_ = X.shape[1]
        return self

    def decision_function(self, X) -> np.ndarray:
        """Anomaly score in [0, 1]; higher means more suspicious."""
        check_is_fitted(self, "bundle_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} features, "
                             f"got {X.shape[1]}")
        values, _, _ = score_batch(self.bundle_, self.weights_, X)
        return values

    def score_samples(self, X) -> np.ndarray:
        """Sklearn convention: higher = more normal."""
        return -self.decision_function(X)

    def predict(self, X) -> np.ndarray:
        """1 = suspicious, 0 = normal, at the fitted threshold."""
        return (self.decision_function(X) >= self.threshold_).astype(int)
