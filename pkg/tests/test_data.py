import math

import numpy as np
import pytest

from payguard.data import (
    DAY_STEPS,
    FEATURE_DIM,
    LABEL_COLUMN,
    ONEHOT_SLICE,
    PAYSIM_COLUMNS,
    TX_TYPES,
    ConfigError,
    DatasetSplit,
    GeneratorConfig,
    PatternLabel,
    RowError,
    SchemaError,
    SplitError,
    TransactionRecord,
    cross_time_split,
    encode,
    encode_all,
    fit_stats,
    generate_synthetic,
    load_paysim_csv,
    sparsify,
    time_boundary,
    write_synthetic_csv,
)


def _record(step=0, tx_type="PAYMENT", amount=100.0, label=PatternLabel.NORMAL,
            balances=(1000.0, 900.0, 0.0, 100.0)):
    return TransactionRecord(
        step=step, tx_type=tx_type, amount=amount,
        orig_account="C1", orig_balance_before=balances[0],
        orig_balance_after=balances[1], dest_account="C2",
        dest_balance_before=balances[2], dest_balance_after=balances[3],
        label=label)


# -- CSV ingestion -----------------------------------------------------------

PAYSIM_HEADER = ",".join(PAYSIM_COLUMNS)


def test_load_header_only_file(tmp_path):
    p = tmp_path / "empty.csv"
    p.write_text(PAYSIM_HEADER + "\n")
    assert load_paysim_csv(p) == []


def test_load_single_row(tmp_path):
    p = tmp_path / "one.csv"
    p.write_text(PAYSIM_HEADER + "\n"
                 "5,TRANSFER,181.0,C840083671,181.0,0.0,C38997010,0.0,181.0,1,0\n")
    (rec,) = load_paysim_csv(p)
    assert rec.step == 5
    assert rec.tx_type == "TRANSFER"
    assert rec.amount == 181.0
    assert rec.orig_account == "C840083671"
    assert rec.orig_balance_before == 181.0 and rec.orig_balance_after == 0.0
    assert rec.dest_balance_before == 0.0 and rec.dest_balance_after == 181.0
    assert rec.label is PatternLabel.FRAUD  # isFraud=1, no pattern column


def test_load_rejects_wrong_header(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("a,b,c\n1,2,3\n")
    with pytest.raises(SchemaError):
        load_paysim_csv(p)


def test_load_rejects_empty_file(tmp_path):
    p = tmp_path / "zero.csv"
    p.write_text("")
    with pytest.raises(SchemaError):
        load_paysim_csv(p)


def test_load_rejects_unknown_type_with_line_number(tmp_path):
    p = tmp_path / "rows.csv"
    p.write_text(PAYSIM_HEADER + "\n"
                 "1,PAYMENT,10.0,C1,10.0,0.0,M1,0.0,0.0,0,0\n"
                 "2,WIRE,10.0,C1,10.0,0.0,M1,0.0,0.0,0,0\n")
    with pytest.raises(RowError) as err:
        load_paysim_csv(p)
    assert ":3:" in str(err.value)


def test_load_rejects_short_row(tmp_path):
    p = tmp_path / "short.csv"
    p.write_text(PAYSIM_HEADER + "\n1,PAYMENT,10.0\n")
    with pytest.raises(RowError):
        load_paysim_csv(p)


def test_load_max_rows(tmp_path):
    p = tmp_path / "cap.csv"
    rows = "".join(f"{i},PAYMENT,10.0,C1,10.0,0.0,M1,0.0,0.0,0,0\n" for i in range(10))
    p.write_text(PAYSIM_HEADER + "\n" + rows)
    assert len(load_paysim_csv(p, max_rows=4)) == 4


def test_roundtrip_is_lossless(tmp_path):
    records = generate_synthetic(GeneratorConfig(
        n_accounts=50, n_steps=48, n_records=300, seed=3))
    p = tmp_path / "synth.csv"
    write_synthetic_csv(records, p)
    assert load_paysim_csv(p) == records


def test_written_header_includes_label_column(tmp_path):
    p = tmp_path / "lbl.csv"
    write_synthetic_csv([_record()], p)
    header = p.read_text().splitlines()[0]
    assert header == PAYSIM_HEADER + "," + LABEL_COLUMN


# -- generator ---------------------------------------------------------------

def test_generator_config_validation():
    with pytest.raises(ConfigError):
        GeneratorConfig(fraud_rate=1.5).validate()
    with pytest.raises(ConfigError):
        GeneratorConfig(fraud_rate=0.3, laundering_rate=0.3).validate()
    with pytest.raises(ConfigError):
        GeneratorConfig(n_accounts=5).validate()
    GeneratorConfig().validate()  # defaults are legal


def test_generator_deterministic():
    cfg = GeneratorConfig(n_accounts=60, n_steps=48, n_records=500, seed=9)
    assert generate_synthetic(cfg) == generate_synthetic(cfg)


def test_generator_seed_changes_output():
    a = generate_synthetic(GeneratorConfig(n_accounts=60, n_steps=48, n_records=500, seed=1))
    b = generate_synthetic(GeneratorConfig(n_accounts=60, n_steps=48, n_records=500, seed=2))
    assert a != b


def test_generator_zero_rates_all_normal():
    records = generate_synthetic(GeneratorConfig(
        n_accounts=60, n_steps=48, n_records=400,
        fraud_rate=0.0, laundering_rate=0.0, seed=5))
    assert all(r.label is PatternLabel.NORMAL for r in records)
    assert len(records) == 400


def test_generator_label_mix_near_rates():
    records = generate_synthetic(GeneratorConfig(seed=1))  # 20k records, 1% / 0.5%
    n = len(records)
    fraud = sum(r.label is PatternLabel.FRAUD for r in records)
    laundering = sum(r.label is PatternLabel.LAUNDERING for r in records)
    assert 18_000 <= n <= 22_000
    assert 0.005 <= fraud / n <= 0.02
    assert 0.002 <= laundering / n <= 0.012
    assert fraud + laundering < 0.05 * n  # heavy class imbalance preserved


def test_generator_steps_sorted_and_in_range():
    cfg = GeneratorConfig(n_accounts=60, n_steps=48, n_records=400, seed=7)
    records = generate_synthetic(cfg)
    steps = [r.step for r in records]
    assert steps == sorted(steps)
    assert min(steps) >= 0 and max(steps) < cfg.n_steps + 8  # motif spillover margin


def test_generator_balances_nonnegative_two_decimals():
    records = generate_synthetic(GeneratorConfig(
        n_accounts=60, n_steps=48, n_records=400, seed=8))
    for r in records:
        for v in (r.amount, r.orig_balance_before, r.orig_balance_after,
                  r.dest_balance_before, r.dest_balance_after):
            assert v >= 0.0
            assert abs(v - round(v, 2)) < 1e-9


def test_fraud_motif_drains_origin():
    records = generate_synthetic(GeneratorConfig(
        n_accounts=80, n_steps=96, n_records=2000, fraud_rate=0.05, seed=2))
    drains = [r for r in records
              if r.label is PatternLabel.FRAUD and r.tx_type == "TRANSFER"]
    assert drains
    for r in drains:
        assert r.amount >= 0.9 * r.orig_balance_before  # near-total drain


# -- encoding ----------------------------------------------------------------

def test_fit_stats_hand_example():
    recs = [_record(amount=math.e - 1.0, balances=(0.0, 0.0, 0.0, 0.0)),
            _record(amount=math.e ** 3 - 1.0, balances=(0.0, 0.0, 0.0, 0.0))]
    stats = fit_stats(recs)
    np.testing.assert_allclose(stats.mean[0], 2.0, rtol=1e-12)
    np.testing.assert_allclose(stats.std[0], 1.0, rtol=1e-12)
    np.testing.assert_array_equal(stats.std[1:], 1.0)  # zero-variance fallback


def test_fit_stats_rejects_empty():
    with pytest.raises(SplitError):
        fit_stats([])


def test_encode_shape_and_onehot():
    recs = [_record(step=s, tx_type=t) for s, t in zip(range(5), TX_TYPES)]
    stats = fit_stats(recs)
    X = encode_all(recs, stats)
    assert X.shape == (5, FEATURE_DIM)
    start, stop = ONEHOT_SLICE
    block = X[:, start:stop]
    np.testing.assert_array_equal(block.sum(axis=1), 1.0)
    for i, t in enumerate(TX_TYPES):
        assert block[i, TX_TYPES.index(t)] == 1.0


def test_encode_phase_features():
    stats = fit_stats([_record()])
    mid = encode(_record(step=DAY_STEPS // 2), stats)
    wrapped = encode(_record(step=DAY_STEPS), stats)
    zero = encode(_record(step=0), stats)
    np.testing.assert_allclose(mid[-2:], [0.0, -1.0], atol=1e-12)
    np.testing.assert_array_equal(wrapped[-2:], zero[-2:])
    np.testing.assert_allclose(zero[-2:], [0.0, 1.0], atol=1e-12)


def test_encode_standardizes_continuous():
    records = generate_synthetic(GeneratorConfig(
        n_accounts=60, n_steps=48, n_records=500, seed=4))
    stats = fit_stats(records)
    X = encode_all(records, stats)
    cont = np.concatenate([X[:, :1], X[:, ONEHOT_SLICE[1]:ONEHOT_SLICE[1] + 4]], axis=1)
    np.testing.assert_allclose(cont.mean(axis=0), 0.0, atol=1e-9)
    np.testing.assert_allclose(cont.std(axis=0), 1.0, atol=1e-9)


def test_encode_all_empty():
    stats = fit_stats([_record()])
    assert encode_all([], stats).shape == (0, FEATURE_DIM)


# -- splits ------------------------------------------------------------------

def test_time_boundary_example():
    records = [_record(step=s) for s in (0, 0, 1, 1, 2, 2, 3, 3, 4, 4)]
    assert time_boundary(records, 0.8) == 3


def test_cross_time_split_respects_time():
    records = generate_synthetic(GeneratorConfig(
        n_accounts=60, n_steps=48, n_records=500, seed=6))
    split = cross_time_split(records, 0.8)
    assert max(r.step for r in split.train) < min(r.step for r in split.test)
    assert len(split.train) + len(split.test) == len(records)
    assert 0.75 <= len(split.train) / len(records) <= 0.9


def test_cross_time_split_rejects_degenerate_inputs():
    with pytest.raises(SplitError):
        cross_time_split([], 0.8)
    with pytest.raises(SplitError):
        cross_time_split([_record(step=3) for _ in range(10)], 0.8)
    with pytest.raises(SplitError):
        cross_time_split([_record(step=s) for s in range(10)], 1.5)


def test_sparsify_zero_is_identity():
    records = [_record(step=s) for s in range(20)]
    split = cross_time_split(records, 0.8)
    assert sparsify(split, 0.0, seed=1) is split


def test_sparsify_counts_and_stratification():
    records = generate_synthetic(GeneratorConfig(
        n_accounts=100, n_steps=96, n_records=3000,
        fraud_rate=0.02, laundering_rate=0.01, seed=10))
    split = cross_time_split(records, 0.8)
    per_label = {lbl: sum(r.label is lbl for r in split.train) for lbl in PatternLabel}
    sparse = sparsify(split, 0.3, seed=11)
    for lbl in PatternLabel:
        kept = sum(r.label is lbl for r in sparse.train)
        if per_label[lbl]:
            assert kept == max(1, round(0.7 * per_label[lbl]))
    assert sparse.test == split.test
    # reduced train is a sub-multiset of the original, still time-ordered
    assert [r.step for r in sparse.train] == sorted(r.step for r in sparse.train)


def test_sparsify_deterministic_and_refits_stats():
    records = generate_synthetic(GeneratorConfig(
        n_accounts=60, n_steps=48, n_records=600, seed=12))
    split = cross_time_split(records, 0.8)
    a = sparsify(split, 0.4, seed=5)
    b = sparsify(split, 0.4, seed=5)
    assert a.train == b.train
    np.testing.assert_array_equal(a.stats.mean, b.stats.mean)
    refit = fit_stats(a.train)
    np.testing.assert_array_equal(a.stats.mean, refit.mean)


def test_sparsify_rejects_bad_level():
    split = DatasetSplit(train=[_record()], test=[_record(step=1)],
                         stats=fit_stats([_record()]))
    with pytest.raises(SplitError):
        sparsify(split, 1.0, seed=0)
