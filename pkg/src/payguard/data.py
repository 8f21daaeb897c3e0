"""Transaction data layer.

PaySim-schema CSV ingestion, a deterministic agent-based synthetic
generator with normal / fraud / laundering patterns, the fixed 12-wide
feature encoding, and the two split procedures (cross-time, sparsity).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from .rng import DeterministicRng

PAYSIM_COLUMNS = [
    "step", "type", "amount", "nameOrig", "oldbalanceOrg", "newbalanceOrig",
    "nameDest", "oldbalanceDest", "newbalanceDest", "isFraud", "isFlaggedFraud",
]
LABEL_COLUMN = "patternLabel"

TX_TYPES = ("CASH_IN", "CASH_OUT", "DEBIT", "PAYMENT", "TRANSFER")

DAY_STEPS = 24
FEATURE_DIM = 12
ONEHOT_SLICE = (1, 6)  # columns holding the tx_type one-hot block


class SchemaError(ValueError):
    """CSV header does not match the expected PaySim column list."""


class RowError(ValueError):
    """A data row could not be parsed."""


class ConfigError(ValueError):
    """Generator configuration is infeasible."""


class SplitError(ValueError):
    """The records cannot be split as requested."""


class PatternLabel(Enum):
    NORMAL = "NORMAL"
    FRAUD = "FRAUD"
    LAUNDERING = "LAUNDERING"

    @property
    def suspicious(self) -> bool:
        return self is not PatternLabel.NORMAL


@dataclass(frozen=True)
class TransactionRecord:
    step: int
    tx_type: str
    amount: float
    orig_account: str
    orig_balance_before: float
    orig_balance_after: float
    dest_account: str
    dest_balance_before: float
    dest_balance_after: float
    label: PatternLabel = PatternLabel.NORMAL


# -- CSV ingestion / emission ------------------------------------------------

def load_paysim_csv(path, max_rows: int | None = None) -> list[TransactionRecord]:
    """Read a PaySim-format CSV (optionally with a trailing patternLabel).

    Public PaySim carries only isFraud, so rows map to FRAUD/NORMAL unless
    the extra label column is present. `max_rows` caps ingestion for
    smoke-testing against the full public dump.
    """
    path = Path(path)
    records: list[TransactionRecord] = []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file, expected PaySim header")
        has_label = header == PAYSIM_COLUMNS + [LABEL_COLUMN]
        if not has_label and header != PAYSIM_COLUMNS:
            raise SchemaError(
                f"{path}: expected columns {PAYSIM_COLUMNS}, found {header}")
        for lineno, row in enumerate(reader, start=2):
            if max_rows is not None and len(records) >= max_rows:
                break
            if not row:
                continue
            expected_width = len(PAYSIM_COLUMNS) + (1 if has_label else 0)
            if len(row) != expected_width:
                raise RowError(f"{path}:{lineno}: expected {expected_width} "
                               f"fields, found {len(row)}")
            try:
                step = int(row[0])
                tx_type = row[1]
                if tx_type not in TX_TYPES:
                    raise ValueError(f"unknown transaction type {tx_type!r}")
                amount = float(row[2])
                balances = [float(v) for v in row[4:6] + row[7:9]]
                is_fraud = int(row[9])
                if has_label:
                    label = PatternLabel(row[11])
                else:
                    label = PatternLabel.FRAUD if is_fraud else PatternLabel.NORMAL
            except ValueError as exc:
                raise RowError(f"{path}:{lineno}: {exc}") from exc
            records.append(TransactionRecord(
                step=step, tx_type=tx_type, amount=amount,
                orig_account=row[3],
                orig_balance_before=balances[0], orig_balance_after=balances[1],
                dest_account=row[6],
                dest_balance_before=balances[2], dest_balance_after=balances[3],
                label=label,
            ))
    return records


def write_synthetic_csv(records: list[TransactionRecord], path) -> None:
    """Emit PaySim columns plus the patternLabel column, losslessly
    (floats via repr so load_paysim_csv round-trips exactly)."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(PAYSIM_COLUMNS + [LABEL_COLUMN])
        for r in records:
            writer.writerow([
                r.step, r.tx_type, repr(float(r.amount)), r.orig_account,
                repr(float(r.orig_balance_before)), repr(float(r.orig_balance_after)),
                r.dest_account,
                repr(float(r.dest_balance_before)), repr(float(r.dest_balance_after)),
                1 if r.label.suspicious else 0, 0, r.label.value,
            ])


# -- synthetic generator -------------------------------------------------------

@dataclass
class GeneratorConfig:
    n_accounts: int = 500
    n_steps: int = 240
    n_records: int = 20000
    fraud_rate: float = 0.01
    laundering_rate: float = 0.005
    seed: int = 0

    def validate(self) -> None:
        if not (0 <= self.fraud_rate < 1 and 0 <= self.laundering_rate < 1):
            raise ConfigError("rates must lie in [0, 1)")
        if self.fraud_rate + self.laundering_rate >= 0.5:
            raise ConfigError("fraud_rate + laundering_rate must stay below 0.5")
        if self.n_accounts < 10:
            raise ConfigError("need at least 10 accounts")
        if self.n_steps < 12:
            raise ConfigError("need at least 12 simulation steps")
        if self.n_records < 100:
            raise ConfigError("need at least 100 records")


_TYPE_MIX = (("CASH_IN", 0.22), ("CASH_OUT", 0.22), ("PAYMENT", 0.34),
             ("TRANSFER", 0.17), ("DEBIT", 0.05))


def _pick_type(u: float) -> str:
    acc = 0.0
    for name, p in _TYPE_MIX:
        acc += p
        if u < acc:
            return name
    return _TYPE_MIX[-1][0]


class _World:
    """Balance bookkeeping for the generator."""

    def __init__(self, rng: DeterministicRng, n_accounts: int):
        self.rng = rng
        self.balances: dict[str, float] = {}
        self.customers = [f"C{i:09d}" for i in range(n_accounts)]
        for cid in self.customers:
            self.balances[cid] = round(float(math.exp(8.5 + rng.standard_normal(()))), 2)
        self._fresh = 0

    def fresh_account(self, low_balance: bool = True) -> str:
        """A previously unseen account (mules, layering intermediaries)."""
        self._fresh += 1
        cid = f"C9{self._fresh:08d}"
        z = self.rng.standard_normal(())
        self.balances[cid] = round(float(math.exp(5.0 + 0.5 * z)), 2) if low_balance else 0.0
        return cid

    def debit(self, account: str, amount: float) -> tuple[float, float]:
        before = self.balances.get(account, 0.0)
        after = round(max(0.0, before - amount), 2)
        self.balances[account] = after
        return before, after

    def credit(self, account: str, amount: float) -> tuple[float, float]:
        before = self.balances.get(account, 0.0)
        after = round(before + amount, 2)
        self.balances[account] = after
        return before, after


def generate_synthetic(config: GeneratorConfig) -> list[TransactionRecord]:
    """Deterministic agent-based payment flow with injected anomaly motifs.

    Fraud motif: account takeover — a near-full-balance TRANSFER to a fresh
    mule followed by a CASH_OUT within two steps. Laundering motif: a
    layering chain of 3-6 TRANSFERs of similar (within 5%) amounts routed
    through low-history accounts inside a 6-step window.
    """
    config.validate()
    rng = DeterministicRng(config.seed)
    world = _World(rng, config.n_accounts)

    n_fraud_records = round(config.n_records * config.fraud_rate)
    n_fraud_motifs = n_fraud_records // 2
    target_laundering = round(config.n_records * config.laundering_rate)
    chain_lengths: list[int] = []
    while sum(chain_lengths) < target_laundering:
        chain_lengths.append(rng.integers(3, 7))
    if chain_lengths and sum(chain_lengths) - target_laundering >= chain_lengths[-1]:
        chain_lengths.pop()
    n_normal = config.n_records - 2 * n_fraud_motifs - sum(chain_lengths)
    if n_normal < 0:
        raise ConfigError("anomaly rates leave no room for normal traffic")

    # plan: (step, sequence, payload); sequence keeps the ordering stable
    plan: list[tuple[int, int, tuple]] = []
    seq = 0
    for _ in range(n_normal):
        step = rng.integers(0, config.n_steps)
        plan.append((step, seq, ("normal",)))
        seq += 1
    for _ in range(n_fraud_motifs):
        start = rng.integers(0, config.n_steps - 2)
        victim = world.customers[rng.integers(0, len(world.customers))]
        mule = world.fresh_account(low_balance=False)
        delay = rng.integers(1, 3)
        plan.append((start, seq, ("fraud_transfer", victim, mule)))
        plan.append((start + delay, seq, ("fraud_cashout", mule)))
        seq += 1
    for length in chain_lengths:
        start = rng.integers(0, config.n_steps - 6)
        source = world.customers[rng.integers(0, len(world.customers))]
        hops = [source] + [world.fresh_account() for _ in range(length)]
        base = float(math.exp(8.0 + 0.25 * rng.standard_normal(())))
        for i in range(length):
            hop_step = start + (i * 5) // max(1, length - 1) if length > 1 else start
            plan.append((hop_step, seq,
                         ("launder_hop", hops[i], hops[i + 1], base)))
        seq += 1

    plan.sort(key=lambda item: (item[0], item[1]))

    records: list[TransactionRecord] = []
    pending_fraud_amount: dict[str, float] = {}
    for step, _, payload in plan:
        kind = payload[0]
        if kind == "normal":
            account = world.customers[rng.integers(0, len(world.customers))]
            tx_type = _pick_type(rng.uniform(()))
            amount = round(float(math.exp(4.5 + 0.8 * rng.standard_normal(()))), 2)
            if tx_type == "CASH_IN":
                ob, oa = world.credit(account, amount)
                dest = f"M{rng.integers(0, config.n_accounts):09d}"
                db, da = world.debit(dest, amount)
            else:
                ob, oa = world.debit(account, amount)
                if tx_type == "TRANSFER":
                    dest = world.customers[rng.integers(0, len(world.customers))]
                    db, da = world.credit(dest, amount)
                else:
                    dest = f"M{rng.integers(0, config.n_accounts):09d}"
                    db, da = world.credit(dest, amount)
            records.append(TransactionRecord(
                step=step, tx_type=tx_type, amount=amount,
                orig_account=account, orig_balance_before=ob, orig_balance_after=oa,
                dest_account=dest, dest_balance_before=db, dest_balance_after=da,
                label=PatternLabel.NORMAL))
        elif kind == "fraud_transfer":
            _, victim, mule = payload
            balance = max(world.balances.get(victim, 0.0), 500.0)
            amount = round(0.97 * balance, 2)
            ob, oa = world.debit(victim, amount)
            db, da = world.credit(mule, amount)
            pending_fraud_amount[mule] = amount
            records.append(TransactionRecord(
                step=step, tx_type="TRANSFER", amount=amount,
                orig_account=victim, orig_balance_before=ob, orig_balance_after=oa,
                dest_account=mule, dest_balance_before=db, dest_balance_after=da,
                label=PatternLabel.FRAUD))
        elif kind == "fraud_cashout":
            _, mule = payload
            stolen = pending_fraud_amount.pop(mule, world.balances.get(mule, 0.0))
            amount = round(float(stolen * (0.9 + 0.1 * rng.uniform(()))), 2)
            ob, oa = world.debit(mule, amount)
            dest = f"M{rng.integers(0, config.n_accounts):09d}"
            db, da = world.credit(dest, amount)
            records.append(TransactionRecord(
                step=step, tx_type="CASH_OUT", amount=amount,
                orig_account=mule, orig_balance_before=ob, orig_balance_after=oa,
                dest_account=dest, dest_balance_before=db, dest_balance_after=da,
                label=PatternLabel.FRAUD))
        else:  # launder_hop
            _, src, dst, base = payload
            amount = round(float(base * (0.95 + 0.1 * rng.uniform(()))), 2)
            ob, oa = world.debit(src, amount)
            db, da = world.credit(dst, amount)
            records.append(TransactionRecord(
                step=step, tx_type="TRANSFER", amount=amount,
                orig_account=src, orig_balance_before=ob, orig_balance_after=oa,
                dest_account=dst, dest_balance_before=db, dest_balance_after=da,
                label=PatternLabel.LAUNDERING))
    return records


# -- feature encoding ----------------------------------------------------------

@dataclass
class NormalizationStats:
    """Mean/std of the five continuous log1p features, fit on train only."""

    mean: np.ndarray
    std: np.ndarray

    def as_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "NormalizationStats":
        return cls(mean=np.asarray(d["mean"], dtype=np.float64),
                   std=np.asarray(d["std"], dtype=np.float64))


def _continuous_raw(record: TransactionRecord) -> np.ndarray:
    return np.log1p(np.array([
        record.amount,
        record.orig_balance_before, record.orig_balance_after,
        record.dest_balance_before, record.dest_balance_after,
    ], dtype=np.float64))


def fit_stats(train: list[TransactionRecord]) -> NormalizationStats:
    if not train:
        raise SplitError("cannot fit normalization stats on an empty train set")
    raw = np.stack([_continuous_raw(r) for r in train])
    mean = raw.mean(axis=0)
    std = raw.std(axis=0)  # population convention
    std = np.where(std > 0.0, std, 1.0)
    return NormalizationStats(mean=mean, std=std)


def encode(record: TransactionRecord, stats: NormalizationStats) -> np.ndarray:
    """12-wide feature vector: standardized log1p amount, 5-way type
    one-hot, four standardized log1p balances, daily sin/cos phase."""
    cont = (_continuous_raw(record) - stats.mean) / stats.std
    onehot = np.zeros(len(TX_TYPES))
    onehot[TX_TYPES.index(record.tx_type)] = 1.0
    phase = 2.0 * np.pi * (record.step % DAY_STEPS) / DAY_STEPS
    return np.concatenate([
        cont[:1], onehot, cont[1:], [np.sin(phase), np.cos(phase)],
    ])


def encode_all(records: list[TransactionRecord],
               stats: NormalizationStats) -> np.ndarray:
    if not records:
        return np.zeros((0, FEATURE_DIM))
    return np.stack([encode(r, stats) for r in records])


# -- splits ---------------------------------------------------------------------

@dataclass
class DatasetSplit:
    train: list[TransactionRecord]
    test: list[TransactionRecord]
    stats: NormalizationStats


def time_boundary(records: list[TransactionRecord], fraction: float) -> int:
    """Smallest step b such that records with step <= b reach `fraction`."""
    steps = sorted({r.step for r in records})
    n = len(records)
    running = 0
    counts = {s: 0 for s in steps}
    for r in records:
        counts[r.step] += 1
    for s in steps:
        running += counts[s]
        if running >= fraction * n:
            return s
    return steps[-1]


def cross_time_split(records: list[TransactionRecord],
                     train_fraction: float) -> DatasetSplit:
    """Train on early steps, test on strictly later ones."""
    if not records:
        raise SplitError("no records to split")
    if not (0.0 < train_fraction < 1.0):
        raise SplitError(f"train_fraction must be in (0,1), got {train_fraction}")
    if len({r.step for r in records}) < 2:
        raise SplitError("all records share one step; cannot split across time")
    b = time_boundary(records, train_fraction)
    train = [r for r in records if r.step <= b]
    test = [r for r in records if r.step > b]
    if not test:
        raise SplitError(f"boundary step {b} leaves an empty test set")
    return DatasetSplit(train=train, test=test, stats=fit_stats(train))


def sparsify(split: DatasetSplit, sparsity: float, seed: int) -> DatasetSplit:
    """Stratified subsampling of the training set; test set untouched.

    Keeps round((1 - sparsity) * n) records of each label class, never
    letting a present class vanish. Stats are refit on the reduced train.
    """
    if not (0.0 <= sparsity < 1.0):
        raise SplitError(f"sparsity must be in [0,1), got {sparsity}")
    if sparsity == 0.0:
        return split
    rng = DeterministicRng(seed)
    keep_idx: list[int] = []
    for label in PatternLabel:
        idx = [i for i, r in enumerate(split.train) if r.label is label]
        if not idx:
            continue
        n_keep = max(1, round((1.0 - sparsity) * len(idx)))
        chosen = rng.choice(len(idx), n_keep)
        keep_idx.extend(idx[int(j)] for j in chosen)
    keep_idx.sort()
    train = [split.train[i] for i in keep_idx]
    return DatasetSplit(train=train, test=split.test, stats=fit_stats(train))
