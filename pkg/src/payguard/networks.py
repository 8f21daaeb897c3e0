"""Generator, discriminator, encoder and decoder MLPs plus the three
training losses: adversarial, variational, and their weighted joint sum.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import ContractError, Node, ShapeError, Tape
from .rng import DeterministicRng

PROB_CLAMP = 1e-12
LOG_VAR_MIN = -10.0
LOG_VAR_MAX = 10.0

_HIDDEN_ACTS = ("leaky_relu", "tanh")
_OUTPUT_ACTS = ("sigmoid", "identity", "tanh")


@dataclass
class MlpSpec:
    """Widths and activations of one fully connected network."""

    layer_widths: list[int]
    hidden_activation: str = "leaky_relu"
    output_activation: str = "identity"

    def __post_init__(self):
        if len(self.layer_widths) < 2 or any(w <= 0 for w in self.layer_widths):
            raise ContractError(f"need >=2 positive widths, got {self.layer_widths}")
        if self.hidden_activation not in _HIDDEN_ACTS:
            raise ContractError(f"unknown hidden activation {self.hidden_activation!r}")
        if self.output_activation not in _OUTPUT_ACTS:
            raise ContractError(f"unknown output activation {self.output_activation!r}")

    @property
    def in_dim(self) -> int:
        return self.layer_widths[0]

    @property
    def out_dim(self) -> int:
        return self.layer_widths[-1]


def init_mlp(spec: MlpSpec, rng: DeterministicRng) -> list[np.ndarray]:
    """Glorot-uniform weights, zero biases: [W0, b0, W1, b1, ...]."""
    params: list[np.ndarray] = []
    for fan_in, fan_out in zip(spec.layer_widths, spec.layer_widths[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        w = (rng.uniform((fan_in, fan_out)) * 2.0 - 1.0) * bound
        params.append(w)
        params.append(np.zeros(fan_out))
    return params


def mlp_forward(tape: Tape, param_nodes: list[Node], spec: MlpSpec, x: Node) -> Node:
    """Taped forward pass through the MLP described by `spec`."""
    if x.value.ndim != 2 or x.shape[1] != spec.in_dim:
        raise ShapeError(f"expected input width {spec.in_dim}, got {x.shape}")
    h = x
    n_layers = len(spec.layer_widths) - 1
    for layer in range(n_layers):
        w, b = param_nodes[2 * layer], param_nodes[2 * layer + 1]
        h = tape.add_bias(tape.matmul(h, w), b)
        act = spec.output_activation if layer == n_layers - 1 else spec.hidden_activation
        if act == "leaky_relu":
            h = tape.leaky_relu(h)
        elif act == "tanh":
            h = tape.tanh(h)
        elif act == "sigmoid":
            h = tape.sigmoid(h)
        # identity: nothing
    return h


def mlp_apply(params: list[np.ndarray], spec: MlpSpec, x: np.ndarray) -> np.ndarray:
    """Plain-numpy forward pass; bitwise-matches mlp_forward's values."""
    h = np.asarray(x, dtype=np.float64)
    n_layers = len(spec.layer_widths) - 1
    for layer in range(n_layers):
        w, b = params[2 * layer], params[2 * layer + 1]
        h = h @ w + b
        act = spec.output_activation if layer == n_layers - 1 else spec.hidden_activation
        if act == "leaky_relu":
            h = h * np.where(h > 0.0, 1.0, 0.2)
        elif act == "tanh":
            h = np.tanh(h)
        elif act == "sigmoid":
            h = 1.0 / (1.0 + np.exp(-h))
    return h


@dataclass
class ModelBundle:
    """Parameters of the four networks plus their shapes."""

    d_x: int
    d_z: int
    gen_spec: MlpSpec
    disc_spec: MlpSpec
    enc_spec: MlpSpec
    dec_spec: MlpSpec
    gen_params: list[np.ndarray] = field(default_factory=list)
    disc_params: list[np.ndarray] = field(default_factory=list)
    enc_params: list[np.ndarray] = field(default_factory=list)
    dec_params: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def create(
        cls,
        d_x: int,
        d_z: int = 8,
        rng: DeterministicRng | None = None,
        gen_hidden: list[int] | None = None,
        disc_hidden: list[int] | None = None,
        enc_hidden: list[int] | None = None,
        dec_hidden: list[int] | None = None,
    ) -> "ModelBundle":
        rng = rng or DeterministicRng(0)
        gen_spec = MlpSpec([d_z] + (gen_hidden or [64, 64]) + [d_x],
                           output_activation="identity")
        disc_spec = MlpSpec([d_x] + (disc_hidden or [64, 32]) + [1],
                            output_activation="sigmoid")
        enc_spec = MlpSpec([d_x] + (enc_hidden or [64]) + [2 * d_z],
                           output_activation="identity")
        dec_spec = MlpSpec([d_z] + (dec_hidden or [64]) + [d_x],
                           output_activation="identity")
        return cls(
            d_x=d_x, d_z=d_z,
            gen_spec=gen_spec, disc_spec=disc_spec,
            enc_spec=enc_spec, dec_spec=dec_spec,
            gen_params=init_mlp(gen_spec, rng),
            disc_params=init_mlp(disc_spec, rng),
            enc_params=init_mlp(enc_spec, rng),
            dec_params=init_mlp(dec_spec, rng),
        )

    def clone(self) -> "ModelBundle":
        return ModelBundle(
            d_x=self.d_x, d_z=self.d_z,
            gen_spec=self.gen_spec, disc_spec=self.disc_spec,
            enc_spec=self.enc_spec, dec_spec=self.dec_spec,
            gen_params=[p.copy() for p in self.gen_params],
            disc_params=[p.copy() for p in self.disc_params],
            enc_params=[p.copy() for p in self.enc_params],
            dec_params=[p.copy() for p in self.dec_params],
        )


@dataclass
class JointConfig:
    """Weight of the variational term and the generator's objective."""

    lam: float = 1.0
    generator_objective: str = "non-saturating"  # or "minimax"

    def __post_init__(self):
        if self.lam < 0:
            raise ContractError(f"lambda must be >= 0, got {self.lam}")
        if self.generator_objective not in ("non-saturating", "minimax"):
            raise ContractError(f"unknown objective {self.generator_objective!r}")


# -- forward passes --------------------------------------------------------

def generator_forward(bundle: ModelBundle, z: Node, tape: Tape,
                      param_nodes: list[Node] | None = None) -> Node:
    params = param_nodes or [tape.leaf(p) for p in bundle.gen_params]
    return mlp_forward(tape, params, bundle.gen_spec, z)


def discriminator_forward(bundle: ModelBundle, x: Node, tape: Tape,
                          param_nodes: list[Node] | None = None) -> Node:
    params = param_nodes or [tape.leaf(p) for p in bundle.disc_params]
    probs = mlp_forward(tape, params, bundle.disc_spec, x)
    return tape.clip(probs, PROB_CLAMP, 1.0 - PROB_CLAMP)


def encoder_forward(bundle: ModelBundle, x: Node, tape: Tape,
                    param_nodes: list[Node] | None = None) -> tuple[Node, Node]:
    params = param_nodes or [tape.leaf(p) for p in bundle.enc_params]
    out = mlp_forward(tape, params, bundle.enc_spec, x)
    mu = tape.slice_cols(out, 0, bundle.d_z)
    log_var = tape.clip(tape.slice_cols(out, bundle.d_z, 2 * bundle.d_z),
                        LOG_VAR_MIN, LOG_VAR_MAX)
    return mu, log_var


def decoder_forward(bundle: ModelBundle, z: Node, tape: Tape,
                    param_nodes: list[Node] | None = None) -> Node:
    params = param_nodes or [tape.leaf(p) for p in bundle.dec_params]
    return mlp_forward(tape, params, bundle.dec_spec, z)


def reparameterize(mu: Node, log_var: Node, rng: DeterministicRng, tape: Tape,
                   eps: np.ndarray | None = None) -> Node:
    """z = mu + exp(log_var / 2) * eps with eps ~ N(0, I).

    Pass `eps` explicitly to replay a frozen draw (gradient checks).
    """
    if mu.shape != log_var.shape:
        raise ShapeError(f"reparameterize: {mu.shape} vs {log_var.shape}")
    if eps is None:
        eps = rng.standard_normal(mu.shape)
    sigma = tape.exp(tape.scale(log_var, 0.5))
    return tape.add(mu, tape.mul(sigma, tape.constant(eps)))


# -- losses ----------------------------------------------------------------

def gan_loss(tape: Tape, d_real: Node, d_fake: Node) -> Node:
    """mean(log D(x)) + mean(log(1 - D(G(z)))).

    The discriminator ascends this; the generator step uses either this
    (minimax) or the non-saturating surrogate, chosen in JointConfig.
    """
    if d_real.value.size == 0 or d_fake.value.size == 0:
        raise ContractError("gan_loss: empty batch")
    real_term = tape.mean(tape.log(d_real))
    fake_term = tape.mean(tape.log(tape.shift(tape.negate(d_fake), 1.0)))
    return tape.add(real_term, fake_term)


def generator_loss(tape: Tape, d_fake: Node, objective: str) -> Node:
    """Scalar the generator *descends*. Non-saturating: -mean(log D(G(z)));
    minimax: mean(log(1 - D(G(z))))."""
    if objective == "non-saturating":
        return tape.negate(tape.mean(tape.log(d_fake)))
    return tape.mean(tape.log(tape.shift(tape.negate(d_fake), 1.0)))


def gaussian_kl(tape: Tape, mu: Node, log_var: Node) -> Node:
    """Batch-mean KL(N(mu, diag sigma^2) || N(0, I)), closed form."""
    if mu.shape != log_var.shape:
        raise ShapeError(f"gaussian_kl: {mu.shape} vs {log_var.shape}")
    inner = tape.shift(
        tape.sub(log_var, tape.add(tape.square(mu), tape.exp(log_var))), 1.0)
    per_row = tape.scale(tape.sum(inner, axis=1), -0.5)
    return tape.mean(per_row)


def vae_loss(tape: Tape, x: Node, x_hat: Node, mu: Node, log_var: Node,
             onehot: tuple[int, int] | None = None) -> Node:
    """Negative ELBO up to the Gaussian normalizing constant.

    Continuous coordinates contribute half squared error summed over
    features; the one-hot block (if `onehot=(start, stop)` is given)
    contributes categorical cross-entropy against the decoder logits.
    Both are batch-averaged, then the closed-form KL is added.
    """
    if x.shape != x_hat.shape:
        raise ShapeError(f"vae_loss: x {x.shape} vs x_hat {x_hat.shape}")
    if onehot is None:
        diff = tape.sub(x, x_hat)
        recon = tape.mean(tape.scale(tape.sum(tape.square(diff), axis=1), 0.5))
    else:
        start, stop = onehot
        width = x.shape[1]
        parts = []
        # continuous head + tail around the one-hot block
        for lo, hi in ((0, start), (stop, width)):
            if hi > lo:
                sq = tape.sum(tape.square(tape.sub(
                    tape.slice_cols(x, lo, hi), tape.slice_cols(x_hat, lo, hi))), axis=1)
                parts.append(tape.scale(sq, 0.5))
        logits = tape.slice_cols(x_hat, start, stop)
        target = tape.slice_cols(x, start, stop)
        ce = tape.negate(tape.sum(tape.mul(target, tape.log_softmax(logits)), axis=1))
        parts.append(ce)
        total = parts[0]
        for p in parts[1:]:
            total = tape.add(total, p)
        recon = tape.mean(total)
    return tape.add(recon, gaussian_kl(tape, mu, log_var))


def joint_loss(tape: Tape, gan_value: Node, vae_value: Node,
               config: JointConfig) -> Node:
    """gan_value + lambda * vae_value."""
    if config.lam == 0.0:
        return gan_value
    return tape.add(gan_value, tape.scale(vae_value, config.lam))
