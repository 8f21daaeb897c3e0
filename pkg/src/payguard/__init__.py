"""payguard: GAN-VAE anomaly detection for payment transaction flows."""

from .data import (GeneratorConfig, PatternLabel, TransactionRecord,
                   cross_time_split, encode, encode_all, fit_stats,
                   generate_synthetic, load_paysim_csv, sparsify,
                   write_synthetic_csv)
from .estimator import GanVaeAnomalyDetector
from .evaluation import (MetricReport, confusion, metrics, roc_auc,
                         run_cross_time, run_pattern_breakdown,
                         run_sparsity_sweep)
from .networks import JointConfig, MlpSpec, ModelBundle
from .rng import DeterministicRng
from .scoring import ScoreWeights, calibrate_threshold, classify, score
from .training import (Checkpoint, TrainConfig, load_checkpoint,
                       save_checkpoint, train_gan, train_joint, train_vae)

__version__ = "0.1.0"

__all__ = [
    "Checkpoint", "DeterministicRng", "GanVaeAnomalyDetector",
    "GeneratorConfig", "JointConfig", "MetricReport", "MlpSpec",
    "ModelBundle", "PatternLabel", "ScoreWeights", "TrainConfig",
    "TransactionRecord", "calibrate_threshold", "classify", "confusion",
    "cross_time_split", "encode", "encode_all", "fit_stats",
    "generate_synthetic", "load_checkpoint", "load_paysim_csv", "metrics",
    "roc_auc", "run_cross_time", "run_pattern_breakdown",
    "run_sparsity_sweep", "save_checkpoint", "score", "sparsify",
    "train_gan", "train_joint", "train_vae", "write_synthetic_csv",
]
