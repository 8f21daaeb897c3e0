"""Deterministic, platform-independent random number source.

Counter-based SplitMix64 underneath, Box-Muller on top for normals.
Identical seeds give identical draw sequences on every platform, which
is what makes training runs and experiment reports byte-reproducible.
"""

from __future__ import annotations

import numpy as np

_MASK64 = np.uint64(0xFFFFFFFFFFFFFFFF)
_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_INV_2_53 = 1.0 / 9007199254740992.0  # 2^-53


def _splitmix64(states: np.ndarray) -> np.ndarray:
    """Finalizer of SplitMix64 applied elementwise to uint64 states."""
    z = states
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


class DeterministicRng:
    """Seeded RNG with a plain integer state, safe to checkpoint."""

    def __init__(self, seed: int):
        self._state = np.uint64(seed & 0xFFFFFFFFFFFFFFFF)

    @property
    def state(self) -> int:
        return int(self._state)

    @state.setter
    def state(self, value: int) -> None:
        self._state = np.uint64(value & 0xFFFFFFFFFFFFFFFF)

    def _next_block(self, n: int) -> np.ndarray:
        """Next n raw uint64 words, advancing the counter by n."""
        with np.errstate(over="ignore"):
            offsets = (np.arange(1, n + 1, dtype=np.uint64)) * _GAMMA
            words = _splitmix64(self._state + offsets)
            self._state = (self._state + np.uint64(n) * _GAMMA) & _MASK64
        return words

    def uniform(self, shape) -> np.ndarray:
        """Uniform draws in [0, 1) with 53 bits of precision."""
        n = int(np.prod(shape)) if shape else 1
        words = self._next_block(n)
        out = (words >> np.uint64(11)).astype(np.float64) * _INV_2_53
        return out.reshape(shape)

    def uniform_open(self, shape) -> np.ndarray:
        """Uniform draws in (0, 1], usable as log() arguments."""
        n = int(np.prod(shape)) if shape else 1
        words = self._next_block(n)
        out = ((words >> np.uint64(11)).astype(np.float64) + 1.0) * _INV_2_53
        return out.reshape(shape)

    def standard_normal(self, shape) -> np.ndarray:
        """I.i.d. N(0,1) draws via Box-Muller."""
        n = int(np.prod(shape)) if shape else 1
        pairs = (n + 1) // 2
        u1 = self.uniform_open((pairs,))
        u2 = self.uniform((pairs,))
        r = np.sqrt(-2.0 * np.log(u1))
        theta = 2.0 * np.pi * u2
        z = np.concatenate([r * np.cos(theta), r * np.sin(theta)])[:n]
        return z.reshape(shape)

    def integers(self, low: int, high: int, size: int | None = None) -> np.ndarray | int:
        """Uniform integers in [low, high). Uses rejection-free modulo of a
        53-bit draw; bias is negligible for desk-scale ranges (< 2^32)."""
        span = high - low
        if span <= 0:
            raise ValueError(f"empty range [{low}, {high})")
        n = 1 if size is None else size
        words = self._next_block(n) >> np.uint64(11)
        vals = (words % np.uint64(span)).astype(np.int64) + low
        if size is None:
            return int(vals[0])
        return vals

    def permutation(self, n: int) -> np.ndarray:
        """Deterministic random permutation of range(n)."""
        keys = self._next_block(n)
        return np.argsort(keys, kind="stable")

    def choice(self, n: int, k: int) -> np.ndarray:
        """k distinct indices drawn from range(n) without replacement."""
        if k > n:
            raise ValueError(f"cannot choose {k} from {n} without replacement")
        return self.permutation(n)[:k]

    def spawn(self) -> "DeterministicRng":
        """Derive an independent child stream (consumes one word)."""
        return DeterministicRng(int(self._next_block(1)[0]))
