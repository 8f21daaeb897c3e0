"""Metrics and the three experiment protocols.

Cross-time prediction (train early / test late), per-pattern breakdown
over normal / fraud / laundering, and the sparsity sweep. All runners
are deterministic per (data, seed, config); trend checks in the test
suite use 5-seed medians because single-seed GAN runs are noisy.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from statistics import median

import numpy as np
from scipy.stats import rankdata

from .autodiff import ContractError
from .data import (DatasetSplit, PatternLabel, TransactionRecord,
                   cross_time_split, encode_all, sparsify, time_boundary)
from .networks import ModelBundle
from .rng import DeterministicRng
from .scoring import (ScoreWeights, calibrate_threshold, fit_recon_scale,
                      score_batch)
from .training import TrainConfig, train_gan, train_joint, train_vae

MODEL_KINDS = ("gan-only", "vae-only", "joint")


@dataclass
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


@dataclass
class MetricReport:
    acc: float
    precision: float
    recall: float
    f1: float
    support_pos: int
    support_neg: int
    auc: float | None = None


def confusion(predictions: list[bool], labels: list[bool]) -> ConfusionCounts:
    """Counts with positive = suspicious."""
    if len(predictions) != len(labels) or not predictions:
        raise ContractError("predictions and labels must be equal-length, non-empty")
    c = ConfusionCounts()
    for p, y in zip(predictions, labels):
        if p and y:
            c.tp += 1
        elif p and not y:
            c.fp += 1
        elif not p and y:
            c.fn += 1
        else:
            c.tn += 1
    return c


def metrics(counts: ConfusionCounts) -> MetricReport:
    """Accuracy, precision, recall and harmonic-mean F1, with the usual
    zero-denominator conventions."""
    if counts.total == 0:
        raise ContractError("cannot compute metrics over zero samples")
    acc = (counts.tp + counts.tn) / counts.total
    p = counts.tp / (counts.tp + counts.fp) if counts.tp + counts.fp else 0.0
    r = counts.tp / (counts.tp + counts.fn) if counts.tp + counts.fn else 0.0
    f1 = 2.0 * p * r / (p + r) if p + r > 0 else 0.0
    return MetricReport(acc=acc, precision=p, recall=r, f1=f1,
                        support_pos=counts.tp + counts.fn,
                        support_neg=counts.fp + counts.tn)


def roc_auc(scores, labels) -> float:
    """Mann-Whitney AUC: P(random positive outscores random negative),
    ties counted one half."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray([bool(l) for l in labels])
    n_pos = int(labels.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ContractError("roc_auc needs both classes present")
    ranks = rankdata(scores)
    return float((ranks[labels].sum() - n_pos * (n_pos + 1) / 2.0)
                 / (n_pos * n_neg))


# -- shared pipeline -----------------------------------------------------------

_ALPHA = {"gan-only": 1.0, "vae-only": 0.0, "joint": 0.5}
_TRAINERS = {"gan-only": train_gan, "vae-only": train_vae, "joint": train_joint}


@dataclass
class FittedPipeline:
    bundle: ModelBundle
    weights: ScoreWeights
    theta: float
    split: DatasetSplit


_ALPHA_GRID = (0.0, 0.25, 0.5, 0.75, 1.0)


def fit_pipeline(split: DatasetSplit, model_kind: str,
                 config: TrainConfig) -> FittedPipeline:
    """Train the selected model on the early part of the training window and
    calibrate the alarm threshold on its time-respecting tail.

    The generative networks are fit on the NORMAL-labelled records only
    (they model typical payment flow); for the joint model the mix weight
    alpha is picked from a small grid by calibration F1 alongside theta.
    """
    if model_kind not in MODEL_KINDS:
        raise ContractError(f"model kind must be one of {MODEL_KINDS}")
    b = time_boundary(split.train, 0.8)
    core = [r for r in split.train if r.step <= b]
    calib = [r for r in split.train if r.step > b]
    calib_labels = {r.label.suspicious for r in calib}
    if not calib or len(calib_labels) < 2:
        core, calib = split.train, split.train  # degenerate data: calibrate in-sample

    core_normal = [r for r in core if not r.label.suspicious] or core
    x_core = encode_all(core_normal, split.stats)
    bundle = ModelBundle.create(d_x=x_core.shape[1],
                                rng=DeterministicRng(config.seed))
    bundle, _ = _TRAINERS[model_kind](bundle, x_core, config)

    x_calib = encode_all(calib, split.stats)
    calib_susp = [r.label.suspicious for r in calib]
    normal_mask = np.array([not s for s in calib_susp])
    recon_scale = fit_recon_scale(bundle, x_calib[normal_mask])
    alphas = _ALPHA_GRID if model_kind == "joint" else (_ALPHA[model_kind],)
    best: tuple[float, ScoreWeights, float] | None = None
    for alpha in alphas:
        weights = ScoreWeights(alpha=alpha, recon_scale=recon_scale)
        values, _, _ = score_batch(bundle, weights, x_calib)
        cal = calibrate_threshold(
            [(float(v), s) for v, s in zip(values, calib_susp)])
        if best is None or cal.f1 > best[0]:
            best = (cal.f1, weights, cal.theta)
    _, weights, theta = best
    return FittedPipeline(bundle=bundle, weights=weights,
                          theta=theta, split=split)


def evaluate_pipeline(pipe: FittedPipeline) -> MetricReport:
    x_test = encode_all(pipe.split.test, pipe.split.stats)
    labels = [r.label.suspicious for r in pipe.split.test]
    values, _, _ = score_batch(pipe.bundle, pipe.weights, x_test)
    preds = [bool(v >= pipe.theta) for v in values]
    report = metrics(confusion(preds, labels))
    if any(labels) and not all(labels):
        report.auc = roc_auc(values, labels)
    return report


# -- experiment runners ----------------------------------------------------------

def run_cross_time(records: list[TransactionRecord], train_fraction: float,
                   model_kind: str, config: TrainConfig) -> MetricReport:
    """Headline protocol: train early, evaluate on strictly later steps,
    binary labels with FRAUD and LAUNDERING collapsed to suspicious."""
    split = cross_time_split(records, train_fraction)
    pipe = fit_pipeline(split, model_kind, config)
    return evaluate_pipeline(pipe)


def run_pattern_breakdown(records: list[TransactionRecord], config: TrainConfig,
                          train_fraction: float = 0.8
                          ) -> dict[PatternLabel, MetricReport]:
    """One-vs-rest recognition quality per transaction pattern.

    NORMAL counts a normal verdict as positive over the whole test set;
    FRAUD / LAUNDERING count a suspicious verdict as positive over that
    pattern's rows against the NORMAL rows.
    """
    split = cross_time_split(records, train_fraction)
    present = {r.label for r in split.test}
    for label in PatternLabel:
        if label not in present:
            raise ContractError(f"test set lacks pattern class {label.value}")
    pipe = fit_pipeline(split, "joint", config)
    x_test = encode_all(split.test, split.stats)
    values, _, _ = score_batch(pipe.bundle, pipe.weights, x_test)
    suspicious = [bool(v >= pipe.theta) for v in values]

    out: dict[PatternLabel, MetricReport] = {}
    test = split.test
    normal_preds = [not s for s in suspicious]
    normal_true = [r.label is PatternLabel.NORMAL for r in test]
    out[PatternLabel.NORMAL] = metrics(confusion(normal_preds, normal_true))
    for label in (PatternLabel.FRAUD, PatternLabel.LAUNDERING):
        idx = [i for i, r in enumerate(test)
               if r.label is label or r.label is PatternLabel.NORMAL]
        preds = [suspicious[i] for i in idx]
        true = [test[i].label is label for i in idx]
        out[label] = metrics(confusion(preds, true))
    return out


@dataclass
class SparsityPoint:
    level: float
    seed: int
    report: MetricReport


@dataclass
class SparsitySweepResult:
    points: list[SparsityPoint]

    def median_f1(self, level: float) -> float:
        vals = [p.report.f1 for p in self.points if p.level == level]
        if not vals:
            raise ContractError(f"no sweep points at level {level}")
        return median(vals)

    @property
    def levels(self) -> list[float]:
        seen: list[float] = []
        for p in self.points:
            if p.level not in seen:
                seen.append(p.level)
        return seen


def run_sparsity_sweep(records: list[TransactionRecord], levels: list[float],
                       seeds: list[int], config: TrainConfig,
                       train_fraction: float = 0.8) -> SparsitySweepResult:
    """Degradation protocol: subsample the training set at each
    sparsity level, retrain, and evaluate on the untouched test window."""
    if any(b <= a for a, b in zip(levels, levels[1:])):
        raise ContractError("sparsity levels must be strictly increasing")
    if levels and not (0.0 <= levels[0] and levels[-1] < 1.0):
        raise ContractError("sparsity levels must lie in [0, 1)")
    base = cross_time_split(records, train_fraction)
    points: list[SparsityPoint] = []
    for level in levels:
        for seed in seeds:
            split = sparsify(base, level, seed)
            pipe = fit_pipeline(split, "joint", replace(config, seed=seed))
            points.append(SparsityPoint(level=level, seed=seed,
                                        report=evaluate_pipeline(pipe)))
    return SparsitySweepResult(points=points)


# -- report emission -------------------------------------------------------------

REPORT_COLUMNS = ["experiment", "model", "seed", "level",
                  "acc", "precision", "recall", "f1", "auc"]


def report_row(experiment: str, model: str, seed, level,
               report: MetricReport) -> dict:
    return {
        "experiment": experiment, "model": model, "seed": seed, "level": level,
        "acc": report.acc, "precision": report.precision,
        "recall": report.recall, "f1": report.f1, "auc": report.auc,
    }


def write_report_csv(rows: list[dict], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(REPORT_COLUMNS) + "\n")
        for row in rows:
            fh.write(",".join("" if row.get(c) is None else
                              (repr(row[c]) if isinstance(row[c], float) else str(row[c]))
                              for c in REPORT_COLUMNS) + "\n")


def format_report_table(rows: list[dict]) -> str:
    headers = REPORT_COLUMNS
    rendered = [[("" if row.get(c) is None else
                  (f"{row[c]:.4f}" if isinstance(row[c], float) else str(row[c])))
                 for c in headers] for row in rows]
    widths = [max(len(h), *(len(r[i]) for r in rendered)) if rendered else len(h)
              for i, h in enumerate(headers)]
    lines = ["  ".join(h.ljust(w) for h, w in zip(headers, widths))]
    lines.append("  ".join("-" * w for w in widths))
    for r in rendered:
        lines.append("  ".join(v.ljust(w) for v, w in zip(r, widths)))
    return "\n".join(lines)
