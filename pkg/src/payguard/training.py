"""Optimizers, the three training procedures, checkpoints and traces.

Joint training interleaves the adversarial schedule with VAE steps whose
gradients are scaled by lambda; at lambda=0 the procedure is
update-for-update identical to plain GAN training, which the test suite
uses as a strong oracle.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass

import numpy as np

from . import networks
from .autodiff import ContractError, Tape, backward
from .data import NormalizationStats
from .networks import JointConfig, MlpSpec, ModelBundle
from .rng import DeterministicRng

CHECKPOINT_MAGIC = b"PAYGUARD"
CHECKPOINT_VERSION = 1


class TrainingDiverged(RuntimeError):
    """A loss or parameter went NaN/Inf; training aborted loudly."""


class CheckpointError(ValueError):
    """Checkpoint file unreadable or structurally invalid."""


class CheckpointVersionError(CheckpointError):
    """Checkpoint format version not supported by this build."""


@dataclass
class TrainConfig:
    epochs: int = 3
    batch_size: int = 128
    lr_d: float = 2e-4
    lr_g: float = 2e-4
    lr_vae: float = 1e-3
    lam: float = 1.0
    d_steps_per_g_step: int = 3
    seed: int = 0
    generator_objective: str = "non-saturating"

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size <= 0:
            raise ContractError("epochs must be >= 0 and batch_size positive")
        if self.lam < 0:
            raise ContractError("lambda must be non-negative")

    def joint(self) -> JointConfig:
        return JointConfig(lam=self.lam,
                           generator_objective=self.generator_objective)


@dataclass
class TraceEntry:
    epoch: int
    l_gan: float
    l_vae: float
    l_joint: float
    d_real_mean: float
    d_fake_mean: float


TrainingTrace = list  # list[TraceEntry], one per completed epoch


class AdamState:
    """Standard Adam with bias correction over a list of parameter arrays."""

    def __init__(self, params: list[np.ndarray], lr: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]


def adam_step(params: list[np.ndarray], grads: list[np.ndarray],
              state: AdamState) -> None:
    """One in-place Adam update over aligned parameter/gradient lists."""
    if len(params) != len(grads):
        raise ContractError("params and grads length mismatch")
    state.step_count += 1
    t = state.step_count
    bc1 = 1.0 - state.beta1 ** t
    bc2 = 1.0 - state.beta2 ** t
    for i, (p, g) in enumerate(zip(params, grads)):
        if p.shape != g.shape:
            raise ContractError(f"grad shape {g.shape} != param shape {p.shape}")
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g
        m_hat = state.m[i] / bc1
        v_hat = state.v[i] / bc2
        p -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)


def _grads_in_order(grad_map: dict, param_nodes) -> list[np.ndarray]:
    return [grad_map[node.id] for node in param_nodes]


def _check_finite(value: float, params_lists, epoch: int, batch: int) -> None:
    if not np.isfinite(value):
        raise TrainingDiverged(f"non-finite loss at epoch {epoch}, batch {batch}")
    for params in params_lists:
        for p in params:
            if not np.all(np.isfinite(p)):
                raise TrainingDiverged(
                    f"non-finite parameter at epoch {epoch}, batch {batch}")


def _train(bundle: ModelBundle, features: np.ndarray, config: TrainConfig,
           do_gan: bool, do_vae: bool) -> tuple[ModelBundle, TrainingTrace]:
    if features.ndim != 2 or features.shape[1] != bundle.d_x:
        raise ContractError(
            f"features must be (n, {bundle.d_x}), got {features.shape}")
    if features.shape[0] == 0:
        raise ContractError("empty training set")
    bundle = bundle.clone()
    rng = DeterministicRng(config.seed)
    n = features.shape[0]
    onehot = _onehot_for(bundle)

    opt_d = AdamState(bundle.disc_params, config.lr_d)
    opt_g = AdamState(bundle.gen_params, config.lr_g)
    opt_vae = AdamState(bundle.enc_params + bundle.dec_params, config.lr_vae)

    trace: TrainingTrace = []
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        gan_vals, vae_vals, dr_vals, df_vals = [], [], [], []
        for batch_no, lo in enumerate(range(0, n, config.batch_size)):
            batch = features[order[lo:lo + config.batch_size]]
            if do_gan:
                for _ in range(config.d_steps_per_g_step):
                    tape = Tape()
                    x = tape.constant(batch)
                    z = tape.constant(rng.standard_normal((len(batch), bundle.d_z)))
                    gen_nodes = [tape.constant(p) for p in bundle.gen_params]
                    fake = networks.mlp_forward(tape, gen_nodes, bundle.gen_spec, z)
                    disc_nodes = [tape.leaf(p) for p in bundle.disc_params]
                    d_real = networks.discriminator_forward(bundle, x, tape, disc_nodes)
                    d_fake = networks.discriminator_forward(bundle, fake, tape, disc_nodes)
                    gan_node = networks.gan_loss(tape, d_real, d_fake)
                    loss_d = tape.negate(gan_node)  # ascend Eq. value = descend -value
                    grads = backward(tape, loss_d)
                    adam_step(bundle.disc_params,
                              _grads_in_order(grads, disc_nodes), opt_d)
                    _check_finite(float(loss_d.value), [bundle.disc_params],
                                  epoch, batch_no)
                    gan_vals.append(float(gan_node.value))
                    dr_vals.append(float(d_real.value.mean()))
                    df_vals.append(float(d_fake.value.mean()))
                tape = Tape()
                z = tape.constant(rng.standard_normal((len(batch), bundle.d_z)))
                gen_nodes = [tape.leaf(p) for p in bundle.gen_params]
                fake = networks.mlp_forward(tape, gen_nodes, bundle.gen_spec, z)
                disc_nodes = [tape.constant(p) for p in bundle.disc_params]
                d_fake = networks.discriminator_forward(bundle, fake, tape, disc_nodes)
                loss_g = networks.generator_loss(tape, d_fake,
                                                 config.generator_objective)
                grads = backward(tape, loss_g)
                adam_step(bundle.gen_params,
                          _grads_in_order(grads, gen_nodes), opt_g)
                _check_finite(float(loss_g.value), [bundle.gen_params],
                              epoch, batch_no)
            if do_vae:
                tape = Tape()
                x = tape.constant(batch)
                enc_nodes = [tape.leaf(p) for p in bundle.enc_params]
                dec_nodes = [tape.leaf(p) for p in bundle.dec_params]
                mu, log_var = networks.encoder_forward(bundle, x, tape, enc_nodes)
                z = networks.reparameterize(mu, log_var, rng, tape)
                x_hat = networks.decoder_forward(bundle, z, tape, dec_nodes)
                vae_node = networks.vae_loss(tape, x, x_hat, mu, log_var,
                                             onehot=onehot)
                scaled = tape.scale(vae_node, config.lam) if do_gan else vae_node
                grads = backward(tape, scaled)
                adam_step(bundle.enc_params + bundle.dec_params,
                          _grads_in_order(grads, enc_nodes + dec_nodes), opt_vae)
                _check_finite(float(vae_node.value),
                              [bundle.enc_params, bundle.dec_params],
                              epoch, batch_no)
                vae_vals.append(float(vae_node.value))
        l_gan = float(np.mean(gan_vals)) if gan_vals else 0.0
        l_vae = float(np.mean(vae_vals)) if vae_vals else 0.0
        trace.append(TraceEntry(
            epoch=epoch, l_gan=l_gan, l_vae=l_vae,
            l_joint=l_gan + config.lam * l_vae,
            d_real_mean=float(np.mean(dr_vals)) if dr_vals else 0.0,
            d_fake_mean=float(np.mean(df_vals)) if df_vals else 0.0))
    return bundle, trace


def _onehot_for(bundle: ModelBundle) -> tuple[int, int] | None:
    from .data import FEATURE_DIM, ONEHOT_SLICE
    return ONEHOT_SLICE if bundle.d_x == FEATURE_DIM else None


def train_gan(bundle: ModelBundle, features: np.ndarray,
              config: TrainConfig) -> tuple[ModelBundle, TrainingTrace]:
    """Alternating discriminator/generator updates on the adversarial loss."""
    return _train(bundle, features, config, do_gan=True, do_vae=False)


def train_vae(bundle: ModelBundle, features: np.ndarray,
              config: TrainConfig) -> tuple[ModelBundle, TrainingTrace]:
    """Minibatch descent on the variational loss (encoder + decoder only)."""
    return _train(bundle, features, config, do_gan=False, do_vae=True)


def train_joint(bundle: ModelBundle, features: np.ndarray,
                config: TrainConfig) -> tuple[ModelBundle, TrainingTrace]:
    """Adversarial schedule interleaved with lambda-weighted VAE steps.

    With lam == 0 the VAE branch is skipped entirely (no optimizer state,
    no noise draws), so the run replays train_gan exactly."""
    return _train(bundle, features, config, do_gan=True, do_vae=config.lam > 0)


# -- traces ------------------------------------------------------------------

TRACE_COLUMNS = ["epoch", "l_gan", "l_vae", "l_joint", "d_real_mean", "d_fake_mean"]


def write_trace_csv(trace: TrainingTrace, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(TRACE_COLUMNS) + "\n")
        for e in trace:
            fh.write(f"{e.epoch},{e.l_gan!r},{e.l_vae!r},{e.l_joint!r},"
                     f"{e.d_real_mean!r},{e.d_fake_mean!r}\n")


# -- checkpoints ---------------------------------------------------------------

_GROUPS = ("gen", "disc", "enc", "dec")


@dataclass
class Checkpoint:
    version: int
    bundle: ModelBundle
    stats: NormalizationStats | None = None
    config: TrainConfig | None = None
    rng_state: int | None = None


def _spec_to_dict(spec: MlpSpec) -> dict:
    return {"layer_widths": list(spec.layer_widths),
            "hidden_activation": spec.hidden_activation,
            "output_activation": spec.output_activation}


def save_checkpoint(bundle: ModelBundle, stats: NormalizationStats | None,
                    config: TrainConfig | None, path,
                    rng_state: int | None = None) -> None:
    """Versioned binary checkpoint; float64 payload is written raw so a
    round-trip reproduces every score bitwise."""
    arrays: list[np.ndarray] = []
    manifest: list[list] = []
    for group in _GROUPS:
        for i, p in enumerate(getattr(bundle, f"{group}_params")):
            arrays.append(p)
            manifest.append([group, i, list(p.shape)])
    header = {
        "d_x": bundle.d_x,
        "d_z": bundle.d_z,
        "specs": {
            "gen": _spec_to_dict(bundle.gen_spec),
            "disc": _spec_to_dict(bundle.disc_spec),
            "enc": _spec_to_dict(bundle.enc_spec),
            "dec": _spec_to_dict(bundle.dec_spec),
        },
        "stats": stats.as_dict() if stats is not None else None,
        "config": asdict(config) if config is not None else None,
        "rng_state": rng_state,
        "arrays": manifest,
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<II", CHECKPOINT_VERSION, len(blob)))
        fh.write(blob)
        for a in arrays:
            fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < len(CHECKPOINT_MAGIC) + 8 or not raw.startswith(CHECKPOINT_MAGIC):
        raise CheckpointError(f"{path}: not a payguard checkpoint")
    off = len(CHECKPOINT_MAGIC)
    version, header_len = struct.unpack_from("<II", raw, off)
    if version != CHECKPOINT_VERSION:
        raise CheckpointVersionError(
            f"{path}: version {version} unsupported (expected {CHECKPOINT_VERSION})")
    off += 8
    if len(raw) < off + header_len:
        raise CheckpointError(f"{path}: truncated header")
    try:
        header = json.loads(raw[off:off + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt header: {exc}") from exc
    off += header_len
    params: dict[str, list[np.ndarray]] = {g: [] for g in _GROUPS}
    for group, index, shape in header["arrays"]:
        count = int(np.prod(shape)) if shape else 1
        nbytes = count * 8
        if len(raw) < off + nbytes:
            raise CheckpointError(f"{path}: truncated payload at {group}[{index}]")
        arr = np.frombuffer(raw[off:off + nbytes], dtype="<f8").astype(
            np.float64).reshape(shape)
        params[group].append(arr.copy())
        off += nbytes
    specs = {g: MlpSpec(**header["specs"][g]) for g in _GROUPS}
    bundle = ModelBundle(
        d_x=header["d_x"], d_z=header["d_z"],
        gen_spec=specs["gen"], disc_spec=specs["disc"],
        enc_spec=specs["enc"], dec_spec=specs["dec"],
        gen_params=params["gen"], disc_params=params["disc"],
        enc_params=params["enc"], dec_params=params["dec"],
    )
    stats = (NormalizationStats.from_dict(header["stats"])
             if header["stats"] is not None else None)
    config = (TrainConfig(**header["config"])
              if header["config"] is not None else None)
    return Checkpoint(version=version, bundle=bundle, stats=stats,
                      config=config, rng_state=header["rng_state"])
