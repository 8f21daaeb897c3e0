"""Minimal dense-tensor reverse-mode differentiation.

Forward values are computed eagerly; each operation appends a node to a
Tape holding the value and the vector-Jacobian rules for its inputs.
Everything is float64: the models are desk-scale MLPs and the test suite
leans on finite-difference comparisons that need the precision.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

LOG_CLAMP = 1e-12
LEAKY_SLOPE = 0.2


class ShapeError(ValueError):
    """Operand shapes incompatible for the requested operation."""


class ContractError(ValueError):
    """A documented precondition was violated."""


class Node:
    """One recorded operation (or leaf) on a tape."""

    __slots__ = ("id", "value", "parents", "is_leaf")

    def __init__(self, node_id: int, value: np.ndarray, parents, is_leaf: bool = False):
        self.id = node_id
        self.value = value
        self.parents = parents  # list of (Node, vjp: grad_out -> grad_in)
        self.is_leaf = is_leaf

    @property
    def shape(self):
        return self.value.shape


def _as_array(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float64)


class Tape:
    """Append-only operation record; node inputs always precede the node."""

    def __init__(self):
        self.nodes: list[Node] = []
        self.leaf_ids: set[int] = set()

    def _record(self, value: np.ndarray, parents, is_leaf=False) -> Node:
        node = Node(len(self.nodes), value, parents, is_leaf)
        self.nodes.append(node)
        if is_leaf:
            self.leaf_ids.add(node.id)
        return node

    def leaf(self, value) -> Node:
        """Register a differentiable parameter."""
        return self._record(_as_array(value), [], is_leaf=True)

    def constant(self, value) -> Node:
        """Register a non-differentiable input (data batches, targets)."""
        return self._record(_as_array(value), [])

    # -- primitives -------------------------------------------------------

    def matmul(self, a: Node, b: Node) -> Node:
        if a.value.ndim != 2 or b.value.ndim != 2 or a.shape[1] != b.shape[0]:
            raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
        out = a.value @ b.value
        return self._record(out, [
            (a, lambda g: g @ b.value.T),
            (b, lambda g: a.value.T @ g),
        ])

    def add(self, a: Node, b: Node) -> Node:
        if a.shape != b.shape:
            raise ShapeError(f"add: shape mismatch {a.shape} vs {b.shape}")
        return self._record(a.value + b.value, [(a, lambda g: g), (b, lambda g: g)])

    def sub(self, a: Node, b: Node) -> Node:
        if a.shape != b.shape:
            raise ShapeError(f"sub: shape mismatch {a.shape} vs {b.shape}")
        return self._record(a.value - b.value, [(a, lambda g: g), (b, lambda g: -g)])

    def mul(self, a: Node, b: Node) -> Node:
        if a.shape != b.shape:
            raise ShapeError(f"mul: shape mismatch {a.shape} vs {b.shape}")
        return self._record(a.value * b.value, [
            (a, lambda g: g * b.value),
            (b, lambda g: g * a.value),
        ])

    def scale(self, a: Node, c: float) -> Node:
        c = float(c)
        return self._record(a.value * c, [(a, lambda g: g * c)])

    def shift(self, a: Node, c: float) -> Node:
        c = float(c)
        return self._record(a.value + c, [(a, lambda g: g)])

    def negate(self, a: Node) -> Node:
        return self._record(-a.value, [(a, lambda g: -g)])

    def square(self, a: Node) -> Node:
        return self._record(a.value ** 2, [(a, lambda g: 2.0 * a.value * g)])

    def exp(self, a: Node) -> Node:
        out = np.exp(a.value)
        return self._record(out, [(a, lambda g: g * out)])

    def log(self, a: Node) -> Node:
        """Natural log with the argument clamped to >= LOG_CLAMP so a
        saturated discriminator cannot produce -inf."""
        clamped = np.maximum(a.value, LOG_CLAMP)
        mask = (a.value >= LOG_CLAMP).astype(np.float64)
        return self._record(np.log(clamped), [(a, lambda g: g * mask / clamped)])

    def sigmoid(self, a: Node) -> Node:
        out = 1.0 / (1.0 + np.exp(-a.value))
        return self._record(out, [(a, lambda g: g * out * (1.0 - out))])

    def tanh(self, a: Node) -> Node:
        out = np.tanh(a.value)
        return self._record(out, [(a, lambda g: g * (1.0 - out ** 2))])

    def leaky_relu(self, a: Node, slope: float = LEAKY_SLOPE) -> Node:
        factor = np.where(a.value > 0.0, 1.0, slope)
        return self._record(a.value * factor, [(a, lambda g: g * factor)])

    def clip(self, a: Node, lo: float, hi: float) -> Node:
        """Hard clip; gradient passes through only inside [lo, hi]."""
        mask = ((a.value >= lo) & (a.value <= hi)).astype(np.float64)
        return self._record(np.clip(a.value, lo, hi), [(a, lambda g: g * mask)])

    def sum(self, a: Node, axis: int | None = None) -> Node:
        out = a.value.sum(axis=axis)
        if axis is None:
            return self._record(out, [(a, lambda g: np.full_like(a.value, g))])
        return self._record(out, [(a, lambda g: np.broadcast_to(
            np.expand_dims(g, axis), a.shape).copy())])

    def mean(self, a: Node, axis: int | None = None) -> Node:
        n = a.value.size if axis is None else a.shape[axis]
        out = a.value.mean(axis=axis)
        if axis is None:
            return self._record(out, [(a, lambda g: np.full_like(a.value, g / n))])
        return self._record(out, [(a, lambda g: np.broadcast_to(
            np.expand_dims(g / n, axis), a.shape).copy())])

    def add_bias(self, x: Node, b: Node) -> Node:
        """Broadcast a (d,) bias over the rows of an (n, d) batch."""
        if x.value.ndim != 2 or b.value.ndim != 1 or x.shape[1] != b.shape[0]:
            raise ShapeError(f"add_bias: batch {x.shape} vs bias {b.shape}")
        return self._record(x.value + b.value, [
            (x, lambda g: g),
            (b, lambda g: g.sum(axis=0)),
        ])

    def concat(self, parts: list[Node], axis: int = 1) -> Node:
        out = np.concatenate([p.value for p in parts], axis=axis)
        parents = []
        offset = 0
        for p in parts:
            width = p.shape[axis]
            sl = [slice(None)] * out.ndim
            sl[axis] = slice(offset, offset + width)
            parents.append((p, lambda g, sl=tuple(sl): g[sl]))
            offset += width
        return self._record(out, parents)

    def slice_cols(self, a: Node, start: int, stop: int) -> Node:
        if a.value.ndim != 2:
            raise ShapeError(f"slice_cols: expected 2-d input, got {a.shape}")

        def vjp(g):
            full = np.zeros_like(a.value)
            full[:, start:stop] = g
            return full

        return self._record(a.value[:, start:stop], [(a, vjp)])

    def log_softmax(self, a: Node) -> Node:
        """Row-wise log-softmax (stable); used for the categorical block."""
        if a.value.ndim != 2:
            raise ShapeError(f"log_softmax: expected 2-d input, got {a.shape}")
        shifted = a.value - a.value.max(axis=1, keepdims=True)
        lse = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
        out = shifted - lse
        soft = np.exp(out)
        return self._record(out, [
            (a, lambda g: g - soft * g.sum(axis=1, keepdims=True)),
        ])


GradientMap = dict  # leaf node id -> np.ndarray of the leaf's shape


def backward(tape: Tape, root: Node) -> GradientMap:
    """Reverse accumulation from a scalar root to every leaf on the tape.

    Leaves that do not contribute to the root get explicit zero entries.
    """
    if root.value.size != 1:
        raise ContractError(f"backward root must be scalar, got shape {root.shape}")
    grads: dict[int, np.ndarray] = {root.id: np.ones_like(root.value)}
    for node in reversed(tape.nodes[: root.id + 1]):
        g = grads.pop(node.id, None)
        if g is None:
            continue
        if node.is_leaf:
            grads[node.id] = g  # keep: leaves are the outputs
            continue
        for parent, vjp in node.parents:
            contrib = vjp(g)
            if parent.id in grads:
                grads[parent.id] = grads[parent.id] + contrib
            else:
                grads[parent.id] = contrib
    return {
        lid: grads.get(lid, np.zeros_like(tape.nodes[lid].value))
        for lid in tape.leaf_ids
    }


def finite_difference_check(
    f: Callable[[list[np.ndarray]], tuple[float, list[np.ndarray]]],
    params: list[np.ndarray],
    step: float = 1e-5,
) -> float:
    """Max relative error between analytic gradients and central differences.

    `f` maps a parameter list to (scalar value, gradient list) and must be
    deterministic; two identical evaluations disagreeing is a contract
    violation (e.g. an unfrozen noise draw).
    """
    if step <= 0:
        raise ContractError("step must be positive")
    v1, analytic = f(params)
    v2, _ = f(params)
    if v1 != v2:
        raise ContractError("f is not deterministic: repeated evaluations differ")
    worst = 0.0
    for k, p in enumerate(params):
        flat = p.reshape(-1)
        grad_flat = np.asarray(analytic[k]).reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            plus, _ = f(params)
            flat[i] = orig - step
            minus, _ = f(params)
            flat[i] = orig
            numeric = (plus - minus) / (2.0 * step)
            err = abs(grad_flat[i] - numeric) / max(1.0, abs(grad_flat[i]))
            worst = max(worst, err)
    return worst
