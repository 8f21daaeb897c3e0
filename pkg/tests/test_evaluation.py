import numpy as np
import pytest
from sklearn.metrics import (
    accuracy_score,
    f1_score,
    precision_score,
    recall_score,
    roc_auc_score,
)

from payguard.autodiff import ContractError
from payguard.data import GeneratorConfig, PatternLabel, cross_time_split, generate_synthetic
from payguard.evaluation import (
    MODEL_KINDS,
    ConfusionCounts,
    MetricReport,
    SparsityPoint,
    SparsitySweepResult,
    confusion,
    evaluate_pipeline,
    fit_pipeline,
    format_report_table,
    metrics,
    report_row,
    roc_auc,
    run_cross_time,
    run_pattern_breakdown,
    run_sparsity_sweep,
    write_report_csv,
)
from payguard.rng import DeterministicRng
from payguard.training import TrainConfig

FAST = TrainConfig(epochs=1, batch_size=64, seed=0)


def _small_records(seed=1, n=1500):
    return generate_synthetic(GeneratorConfig(
        n_accounts=100, n_steps=96, n_records=n,
        fraud_rate=0.03, laundering_rate=0.015, seed=seed))


# -- confusion / metrics ---------------------------------------------------------

def test_confusion_hand_example():
    preds = [True, True, False, False, True]
    labels = [True, False, True, False, True]
    c = confusion(preds, labels)
    assert (c.tp, c.fp, c.tn, c.fn) == (2, 1, 1, 1)


def test_confusion_rejects_mismatch():
    with pytest.raises(ContractError):
        confusion([True], [True, False])
    with pytest.raises(ContractError):
        confusion([], [])


def test_metrics_hand_example():
    # precision 0.815, recall 0.745 -> F1 = 0.778 to three decimals
    m = metrics(ConfusionCounts(tp=745, fp=169, fn=255, tn=831))
    np.testing.assert_allclose(m.precision, 745 / 914, rtol=1e-12)
    np.testing.assert_allclose(m.recall, 0.745, rtol=1e-12)
    np.testing.assert_allclose(m.f1, 2 * m.precision * m.recall /
                               (m.precision + m.recall), rtol=1e-12)


def test_metrics_zero_conventions():
    m = metrics(ConfusionCounts(tp=0, fp=0, fn=5, tn=5))
    assert m.precision == 0.0 and m.recall == 0.0 and m.f1 == 0.0
    with pytest.raises(ContractError):
        metrics(ConfusionCounts())


def test_metrics_match_sklearn_oracle():
    rng = DeterministicRng(2)
    for _ in range(20):
        preds = (rng.uniform((50,)) < 0.4).tolist()
        labels = (rng.uniform((50,)) < 0.3).tolist()
        m = metrics(confusion(preds, labels))
        np.testing.assert_allclose(m.acc, accuracy_score(labels, preds), rtol=1e-12)
        np.testing.assert_allclose(
            m.precision, precision_score(labels, preds, zero_division=0), rtol=1e-12)
        np.testing.assert_allclose(
            m.recall, recall_score(labels, preds, zero_division=0), rtol=1e-12)
        np.testing.assert_allclose(
            m.f1, f1_score(labels, preds, zero_division=0), rtol=1e-12)


def test_reference_table_f1_consistency():
    # reference comparison rows: F1 must be the harmonic mean of P and R
    rows = [(0.765, 0.680, 0.720), (0.782, 0.702, 0.740), (0.815, 0.745, 0.778),
            (0.792, 0.715, 0.752), (0.832, 0.763, 0.795)]
    for p, r, f1 in rows:
        assert abs(2 * p * r / (p + r) - f1) < 0.002


# -- AUC -------------------------------------------------------------------------

def test_auc_perfect_and_inverted():
    scores = [0.1, 0.2, 0.8, 0.9]
    assert roc_auc(scores, [False, False, True, True]) == 1.0
    assert roc_auc(scores, [True, True, False, False]) == 0.0


def test_auc_ties_count_half():
    assert roc_auc([0.5, 0.5], [True, False]) == 0.5


def test_auc_matches_sklearn_oracle():
    rng = DeterministicRng(4)
    for _ in range(20):
        scores = np.round(rng.uniform((60,)), 2)  # rounding forces ties
        labels = rng.uniform((60,)) < 0.3
        if labels.all() or not labels.any():
            continue
        np.testing.assert_allclose(roc_auc(scores, labels),
                                   roc_auc_score(labels, scores), rtol=1e-12)


def test_auc_matches_pair_counting_oracle():
    rng = DeterministicRng(5)
    scores = np.round(rng.uniform((30,)), 1)
    labels = rng.uniform((30,)) < 0.4
    pos = scores[labels]
    neg = scores[~labels]
    wins = sum((p > n) + 0.5 * (p == n) for p in pos for n in neg)
    np.testing.assert_allclose(roc_auc(scores, labels),
                               wins / (len(pos) * len(neg)), rtol=1e-12)


def test_auc_invariant_under_monotone_transform():
    rng = DeterministicRng(6)
    scores = rng.uniform((40,))
    labels = rng.uniform((40,)) < 0.3
    a = roc_auc(scores, labels)
    b = roc_auc(np.exp(3 * scores), labels)
    np.testing.assert_allclose(a, b, rtol=1e-12)


def test_auc_needs_both_classes():
    with pytest.raises(ContractError):
        roc_auc([0.1, 0.9], [True, True])


# -- pipeline + experiment runners -------------------------------------------------

def test_fit_pipeline_rejects_unknown_kind():
    split = cross_time_split(_small_records(), 0.8)
    with pytest.raises(ContractError):
        fit_pipeline(split, "transformer", FAST)


def test_pipeline_alpha_fixed_for_single_models():
    records = _small_records(seed=3)
    split = cross_time_split(records, 0.8)
    assert fit_pipeline(split, "gan-only", FAST).weights.alpha == 1.0
    assert fit_pipeline(split, "vae-only", FAST).weights.alpha == 0.0


def test_pipeline_deterministic():
    records = _small_records(seed=4)
    split = cross_time_split(records, 0.8)
    a = fit_pipeline(split, "joint", FAST)
    b = fit_pipeline(split, "joint", FAST)
    assert a.theta == b.theta and a.weights == b.weights
    assert evaluate_pipeline(a) == evaluate_pipeline(b)


def test_run_cross_time_report_ranges():
    for kind in MODEL_KINDS:
        report = run_cross_time(_small_records(seed=5), 0.8, kind, FAST)
        for v in (report.acc, report.precision, report.recall, report.f1):
            assert 0.0 <= v <= 1.0
        assert report.auc is None or 0.0 <= report.auc <= 1.0
        assert report.support_pos > 0 and report.support_neg > 0


def test_run_pattern_breakdown_covers_all_labels():
    out = run_pattern_breakdown(_small_records(seed=6, n=2500), FAST)
    assert set(out) == set(PatternLabel)
    for rep in out.values():
        assert isinstance(rep, MetricReport)
        assert rep.support_pos > 0


def test_run_pattern_breakdown_rejects_missing_class():
    records = generate_synthetic(GeneratorConfig(
        n_accounts=100, n_steps=96, n_records=1500,
        fraud_rate=0.0, laundering_rate=0.0, seed=7))
    with pytest.raises(ContractError):
        run_pattern_breakdown(records, FAST)


def test_run_sparsity_sweep_shape_and_median():
    result = run_sparsity_sweep(_small_records(seed=8), [0.2, 0.6],
                                seeds=[1, 2, 3], config=FAST)
    assert result.levels == [0.2, 0.6]
    assert len(result.points) == 6
    f1s = sorted(p.report.f1 for p in result.points if p.level == 0.2)
    assert result.median_f1(0.2) == f1s[1]  # middle of three


def test_run_sparsity_sweep_rejects_unsorted_levels():
    with pytest.raises(ContractError):
        run_sparsity_sweep(_small_records(), [0.5, 0.2], seeds=[1], config=FAST)


def test_sparsity_result_helpers():
    rep = MetricReport(acc=1, precision=1, recall=1, f1=0.5,
                       support_pos=1, support_neg=1)
    res = SparsitySweepResult(points=[SparsityPoint(0.1, 0, rep)])
    with pytest.raises(ContractError):
        res.median_f1(0.9)


# -- reports -----------------------------------------------------------------------

def test_report_csv_roundtrip(tmp_path):
    rep = MetricReport(acc=0.9, precision=0.8, recall=0.7, f1=0.746,
                       support_pos=10, support_neg=90, auc=0.95)
    rows = [report_row("cross-time", "joint", 1, None, rep)]
    p = tmp_path / "report.csv"
    write_report_csv(rows, p)
    lines = p.read_text().splitlines()
    assert lines[0].startswith("experiment,model,seed,level,acc")
    assert "cross-time" in lines[1] and "0.746" in lines[1]
    table = format_report_table(rows)
    assert "joint" in table and "cross-time" in table
