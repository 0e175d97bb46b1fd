"""Random Bernoulli / sign matrix models and the rank-one shift."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .rng import as_seed, bernoulli_from_raw, raw_uint64


@dataclass(frozen=True)
class ModelParams:
    """Dimension ``n``, Bernoulli parameter ``p`` and shift ``s``.

    ``p`` and ``s`` are kept as exact rationals.  The degenerate values
    ``p = 0`` and ``p = 1`` are accepted so that the trivial models can be
    sampled.
    """

    n: int
    p: Fraction = Fraction(1, 2)
    s: Fraction = Fraction(0)

    def __post_init__(self):
        object.__setattr__(self, "p", to_rational(self.p))
        object.__setattr__(self, "s", to_rational(self.s))
        if int(self.n) != self.n or self.n < 1:
            raise ValueError(f"n must be a positive integer, got {self.n}")
        if not 0 <= self.p <= 1:
            raise ValueError(f"p must lie in [0, 1], got {self.p}")
        if not -1 <= self.s <= 0:
            raise ValueError(f"s must lie in [-1, 0], got {self.s}")


def to_rational(value) -> Fraction:
    """Exact rational from an int, Fraction, decimal string or float.

    Floats go through their shortest repr so ``0.3`` becomes ``3/10``.
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, float):
        return Fraction(repr(value))
    return Fraction(value)


def sample_bernoulli_batch(n: int, p, count: int, seed, rows: int | None = None) -> np.ndarray:
    """``count`` independent ``rows x n`` Bernoulli(p) matrices, shape (count, rows, n)."""
    rows = n if rows is None else rows
    raw = raw_uint64(as_seed(seed), (count, rows, n))
    return bernoulli_from_raw(raw, p)


def sample_bernoulli_matrix(params: ModelParams, seed) -> np.ndarray:
    return sample_bernoulli_batch(params.n, params.p, 1, seed)[0]


def sample_sign_matrix(n: int, seed) -> np.ndarray:
    # Shares the Bernoulli(1/2) stream, so the identity 2B - 1 holds sample by sample.
    return 2 * sample_bernoulli_matrix(ModelParams(n, Fraction(1, 2)), seed) - 1


def sample_bernoulli_vector(n: int, p, seed) -> np.ndarray:
    return bernoulli_from_raw(raw_uint64(as_seed(seed), n), p)


def shifted_matrix(B: np.ndarray, s) -> np.ndarray:
    """``B + s * 1 1^T`` as a float matrix."""
    B = np.asarray(B)
    if B.ndim != 2 or B.shape[0] != B.shape[1]:
        raise ValueError("B must be square")
    return B.astype(float) + float(s)


def shifted_integer_matrix(B: np.ndarray, s) -> np.ndarray:
    """Integer multiple ``q (B + s 1 1^T)`` where ``s = r/q`` in lowest terms.

    Same singularity as the real shifted matrix, with exact entries.
    """
    s = to_rational(s)
    return s.denominator * np.asarray(B, dtype=np.int64) + s.numerator


def drop_last_row(B: np.ndarray) -> np.ndarray:
    B = np.asarray(B)
    if B.ndim != 2 or B.shape[0] < 2:
        raise ValueError("need a matrix with at least two rows")
    return B[:-1].copy()
