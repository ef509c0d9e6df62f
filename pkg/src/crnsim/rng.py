"""Counter-based random streams.

Every draw is a pure function of ``(master_seed, node_scope, purpose_tag,
counter)``. The scalar path (plain Python ints) and the vectorised path
(numpy ``uint64``) implement the same mixing function, so a per-node state
machine and a batched simulator that index draws the same way see identical
random numbers.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB
_SCOPE_MUL = 0xD6E8FEB86659FD93
_TAG_MUL = 0xA0761D6478BD642F
_INV_2_53 = 1.0 / (1 << 53)


def fmix64(x: int) -> int:
    """SplitMix64 finaliser on a Python int."""
    x &= MASK64
    x = ((x ^ (x >> 30)) * _M1) & MASK64
    x = ((x ^ (x >> 27)) * _M2) & MASK64
    return x ^ (x >> 31)


def mix(*parts: int) -> int:
    """Fold integers into one 64-bit value; used for trial and run seeds."""
    h = 0x6A09E667F3BCC909
    for p in parts:
        h = fmix64(h ^ fmix64((p & MASK64) + GOLDEN))
    return h


def derive_key(master_seed: int, node_scope: int, purpose_tag: int) -> int:
    h = fmix64((master_seed & MASK64) ^ GOLDEN)
    h = fmix64(h ^ ((node_scope * _SCOPE_MUL) & MASK64))
    return fmix64(h ^ ((purpose_tag * _TAG_MUL + 1) & MASK64))


def draw_bits(key: int, counter: int) -> int:
    return fmix64(key + ((counter + 1) * GOLDEN & MASK64))


def draw_uniform(key: int, counter: int) -> float:
    return (draw_bits(key, counter) >> 11) * _INV_2_53


@dataclass
class RngStream:
    """One independent stream, addressable by counter.

    ``uniform(i)`` is random access; ``next_uniform()`` walks the counter.
    """

    master_seed: int
    node_scope: int
    purpose_tag: int
    counter: int = 0

    def __post_init__(self):
        self._key = derive_key(self.master_seed, self.node_scope, self.purpose_tag)

    @property
    def key(self) -> int:
        return self._key

    def uniform(self, counter: int) -> float:
        return draw_uniform(self._key, counter)

    def next_uniform(self) -> float:
        u = draw_uniform(self._key, self.counter)
        self.counter += 1
        return u

    def randint(self, counter: int, n: int) -> int:
        """Uniform integer in ``[0, n)`` from draw ``counter``."""
        return int(self.uniform(counter) * n)


def derive_stream(master_seed: int, node_scope: int, purpose_tag: int) -> RngStream:
    return RngStream(master_seed, node_scope, purpose_tag)


# -- vectorised path --------------------------------------------------------

_U = np.uint64


def _fmix64_np(x: np.ndarray) -> np.ndarray:
    # in place; callers pass a fresh array
    x ^= x >> _U(30)
    x *= _U(_M1)
    x ^= x >> _U(27)
    x *= _U(_M2)
    x ^= x >> _U(31)
    return x


def node_keys(master_seed: int, n: int, purpose_tag: int) -> np.ndarray:
    return np.array([derive_key(master_seed, u, purpose_tag) for u in range(n)], dtype=np.uint64)


def uniforms(keys: np.ndarray, counters: np.ndarray) -> np.ndarray:
    """Draws for every (counter, key) pair: shape ``counters.shape + keys.shape``.

    Matches :func:`draw_uniform` bit for bit.
    """
    keys = np.asarray(keys, dtype=np.uint64)
    c = (np.asarray(counters, dtype=np.uint64) + _U(1)) * _U(GOLDEN)
    with np.errstate(over="ignore"):
        x = _fmix64_np(c.reshape(c.shape + (1,) * keys.ndim) + keys)
    x >>= _U(11)
    out = x.astype(np.float64)
    out *= _INV_2_53
    return out
