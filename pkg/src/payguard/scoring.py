"""Anomaly scoring and threshold calibration.

A transaction's score mixes discriminator evidence (1 - D(x)) with a
normalized VAE reconstruction error; both parts live in [0, 1] and the
mix weight alpha selects GAN-only (1), VAE-only (0) or combined scoring.
Reconstruction uses the posterior mean, never a sampled latent, so the
scoring path is fully deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import ContractError
from .networks import ModelBundle, mlp_apply

PROB_CLAMP = 1e-12


class CalibrationError(ValueError):
    """Threshold calibration needs both classes present."""


@dataclass
class ScoreWeights:
    alpha: float = 0.5
    recon_scale: float = 1.0

    def __post_init__(self):
        if not (0.0 <= self.alpha <= 1.0):
            raise ContractError(f"alpha must be in [0,1], got {self.alpha}")
        if self.recon_scale <= 0.0:
            raise ContractError(f"recon_scale must be positive, got {self.recon_scale}")


@dataclass
class AnomalyScore:
    value: float
    d_part: float
    r_part: float


@dataclass
class CalibratedThreshold:
    theta: float
    f1: float


def discriminator_prob(bundle: ModelBundle, x: np.ndarray) -> np.ndarray:
    probs = mlp_apply(bundle.disc_params, bundle.disc_spec, x)[:, 0]
    return np.clip(probs, PROB_CLAMP, 1.0 - PROB_CLAMP)


def reconstruction_error(bundle: ModelBundle, x: np.ndarray) -> np.ndarray:
    """Per-feature-mean squared error of decode(posterior mean) vs x."""
    enc_out = mlp_apply(bundle.enc_params, bundle.enc_spec, x)
    mu = enc_out[:, :bundle.d_z]
    x_hat = mlp_apply(bundle.dec_params, bundle.dec_spec, mu)
    return ((x - x_hat) ** 2).mean(axis=1)


def score_batch(bundle: ModelBundle, weights: ScoreWeights,
                x: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vector of scores plus the two component parts, all in [0, 1]."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    d_part = 1.0 - discriminator_prob(bundle, x)
    r_part = 1.0 - np.exp(-reconstruction_error(bundle, x) / weights.recon_scale)
    value = weights.alpha * d_part + (1.0 - weights.alpha) * r_part
    return value, d_part, r_part


def score(bundle: ModelBundle, weights: ScoreWeights, x: np.ndarray) -> AnomalyScore:
    value, d_part, r_part = score_batch(bundle, weights, x.reshape(1, -1))
    return AnomalyScore(value=float(value[0]), d_part=float(d_part[0]),
                        r_part=float(r_part[0]))


def fit_recon_scale(bundle: ModelBundle, x_normal: np.ndarray,
                    quantile: float = 0.9) -> float:
    """90th percentile of reconstruction errors on validation normals, so a
    typical normal maps to r_part <= 1 - 1/e."""
    if len(x_normal) == 0:
        return 1.0
    errs = reconstruction_error(bundle, np.atleast_2d(x_normal))
    scale = float(np.quantile(errs, quantile))
    return scale if scale > 0.0 else 1.0


def _f1_at(theta: float, scores: np.ndarray, labels: np.ndarray) -> float:
    pred = scores >= theta
    tp = int(np.sum(pred & labels))
    fp = int(np.sum(pred & ~labels))
    fn = int(np.sum(~pred & labels))
    if tp == 0:
        return 0.0
    p = tp / (tp + fp)
    r = tp / (tp + fn)
    return 2.0 * p * r / (p + r)


def calibrate_threshold(scored: list[tuple[float, bool]],
                        objective: str = "max-f1") -> CalibratedThreshold:
    """Pick the score threshold maximizing F1 (positive = suspicious).

    Candidates are every midpoint between consecutive distinct scores plus
    the sentinels 0 and 1; F1 ties break toward the larger threshold
    (fewer alarms).
    """
    if objective != "max-f1":
        raise ContractError(f"unknown calibration objective {objective!r}")
    if not scored:
        raise CalibrationError("no scores to calibrate on")
    scores = np.array([s for s, _ in scored], dtype=np.float64)
    labels = np.array([bool(l) for _, l in scored])
    if labels.all() or not labels.any():
        raise CalibrationError("calibration needs both classes present")
    distinct = np.unique(scores)
    candidates = [0.0, 1.0] + [float((a + b) / 2.0)
                               for a, b in zip(distinct, distinct[1:])]
    best_theta, best_f1 = 0.0, -1.0
    for theta in sorted(candidates):
        f1 = _f1_at(theta, scores, labels)
        if f1 > best_f1 or (f1 == best_f1 and theta > best_theta):
            best_theta, best_f1 = theta, f1
    return CalibratedThreshold(theta=best_theta, f1=best_f1)


def classify(bundle: ModelBundle, weights: ScoreWeights, theta: float,
             xs: np.ndarray) -> list[bool]:
    """True = suspicious (score >= theta), order-preserving."""
    values, _, _ = score_batch(bundle, weights, xs)
    return [bool(v >= theta) for v in values]
