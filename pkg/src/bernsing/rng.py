"""Counter-based random streams.

Every random draw in the package comes from a Philox generator whose key is a
hash of ``(master, *stream)``.  Two draws with the same master seed and the same
stream labels are bit-identical no matter which process produced them, which is
what makes worker-parallel Monte Carlo reproducible.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

_TWO64 = 1 << 64


@dataclass(frozen=True)
class RngSeed:
    """A master seed plus a lane label (worker index, trial block, ...)."""

    master: int
    stream: tuple = ()

    def __post_init__(self):
        if not 0 <= int(self.master) < _TWO64:
            raise ValueError("master seed must fit in 64 bits")
        object.__setattr__(self, "stream", tuple(self.stream))

    def child(self, *labels) -> "RngSeed":
        return RngSeed(self.master, self.stream + tuple(labels))


def as_seed(seed) -> RngSeed:
    if isinstance(seed, RngSeed):
        return seed
    return RngSeed(int(seed))


def derive_key(master: int, *stream) -> int:
    """128-bit Philox key from ``hash(master, stream...)``."""
    h = hashlib.blake2b(digest_size=16)
    h.update(repr((int(master),) + tuple(stream)).encode())
    return int.from_bytes(h.digest(), "little")


def generator(seed) -> np.random.Generator:
    seed = as_seed(seed)
    return np.random.Generator(np.random.Philox(key=derive_key(seed.master, *seed.stream)))


def raw_uint64(seed, size) -> np.ndarray:
    return generator(seed).bit_generator.random_raw(size)


def bernoulli_cutoff(p) -> int:
    """``floor(p * 2**64)`` for rational ``p`` in [0, 1]."""
    p = Fraction(p)
    if not 0 <= p <= 1:
        raise ValueError(f"p must lie in [0, 1], got {p}")
    return (p.numerator * _TWO64) // p.denominator


def bernoulli_from_raw(raw: np.ndarray, p) -> np.ndarray:
    """Map raw 64-bit words to 0/1 with ``P{1} = floor(p 2^64) / 2^64``.

    The bias against the exact rational ``p`` is below ``2**-64``.
    """
    cut = bernoulli_cutoff(p)
    if cut >= _TWO64:
        return np.ones(raw.shape, dtype=np.int64)
    return (raw < np.uint64(cut)).astype(np.int64)
