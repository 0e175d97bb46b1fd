"""Exact integer linear algebra and floating extreme singular values."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

_INT64_SAFE = 2**62


class DegenerateNullspace(ValueError):
    """The columns span fewer than ``n - 1`` dimensions."""

    def __init__(self, dim: int):
        super().__init__(f"nullspace has dimension {dim}, expected 1")
        self.dim = dim


@dataclass(frozen=True)
class NormalVector:
    coords: np.ndarray
    residual: float
    integer: tuple  # primitive integer representative, same direction


def _as_object(M) -> np.ndarray:
    a = np.asarray(M)
    if a.dtype == object:
        return np.array([[int(v) for v in row] for row in a], dtype=object).reshape(a.shape)
    if not np.issubdtype(a.dtype, np.integer):
        raise TypeError("exact routines need integer entries")
    return a.astype(object)


def det_exact(M) -> int:
    """Determinant by fraction-free (Bareiss) elimination; the empty matrix gives 1."""
    a = _as_object(M)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("det_exact needs a square matrix")
    n = a.shape[0]
    if n == 0:
        return 1
    sign, prev = 1, 1
    for k in range(n - 1):
        if a[k, k] == 0:
            nz = [i for i in range(k + 1, n) if a[i, k] != 0]
            if not nz:
                return 0
            a[[k, nz[0]]] = a[[nz[0], k]]
            sign = -sign
        a[k + 1 :, k + 1 :] = (a[k + 1 :, k + 1 :] * a[k, k] - np.outer(a[k + 1 :, k], a[k, k + 1 :])) // prev
        prev = a[k, k]
    return sign * int(a[n - 1, n - 1])


def _int64_is_safe(n: int, bound: int) -> bool:
    # Bareiss intermediates are k-minors; Hadamard bounds them by (bound * sqrt(n))**n.
    if bound == 0:
        return True
    return 2 * (bound * math.sqrt(n)) ** (2 * n) < _INT64_SAFE


def det_exact_batch(batch) -> np.ndarray:
    """Exact determinants of a stack of square integer matrices, shape (m, n, n).

    Runs the Bareiss recursion on the whole stack at once.  Uses int64 when the
    Hadamard bound rules out overflow and Python integers otherwise.
    """
    batch = np.asarray(batch)
    m, n, n2 = batch.shape
    if n != n2:
        raise ValueError("matrices must be square")
    if n == 0:
        return np.ones(m, dtype=np.int64)
    bound = int(np.abs(batch).max()) if batch.size else 0
    exact64 = batch.dtype != object and _int64_is_safe(n, bound)
    a = batch.astype(np.int64 if exact64 else object).copy()
    one = np.int64(1) if exact64 else 1
    rows = np.arange(m)
    alive = np.ones(m, dtype=bool)
    sign = np.ones(m, dtype=np.int64)
    prev = np.full(m, one, dtype=a.dtype)
    for k in range(n):
        nz = a[:, k:, k] != 0
        alive &= nz.any(axis=1)
        piv_row = k + np.argmax(nz, axis=1)
        swapped = piv_row != k
        sign[swapped] *= -1
        top = a[rows, k].copy()
        a[rows, k] = a[rows, piv_row]
        a[rows, piv_row] = top
        piv = a[:, k, k]
        if k < n - 1:
            with np.errstate(over="ignore"):
                upd = a[:, k + 1 :, k + 1 :] * piv[:, None, None] - a[:, k + 1 :, k, None] * a[:, None, k, k + 1 :]
                a[:, k + 1 :, k + 1 :] = upd // prev[:, None, None]
        prev = np.where(alive, piv, one).astype(a.dtype)
    det = a[:, n - 1, n - 1] * sign
    det = np.where(alive, det, 0)
    return det.astype(np.int64 if exact64 else object)


def echelon_exact(M) -> tuple[np.ndarray, list[int]]:
    """Fraction-free row echelon form and its pivot columns."""
    a = _as_object(M)
    rows, cols = a.shape
    r, prev, pivots = 0, 1, []
    for c in range(cols):
        if r == rows:
            break
        nz = [i for i in range(r, rows) if a[i, c] != 0]
        if not nz:
            continue
        if nz[0] != r:
            a[[r, nz[0]]] = a[[nz[0], r]]
        piv = a[r, c]
        if r + 1 < rows:
            a[r + 1 :, c + 1 :] = (a[r + 1 :, c + 1 :] * piv - np.outer(a[r + 1 :, c], a[r, c + 1 :])) // prev
            a[r + 1 :, c] = 0
        prev = piv
        pivots.append(c)
        r += 1
    return a, pivots


def rank_exact(M) -> int:
    M = np.asarray(M)
    if M.size == 0:
        return 0
    return len(echelon_exact(M)[1])


def unit_normal(cols) -> NormalVector:
    """Unit vector orthogonal to ``n - 1`` integer columns in Z^n.

    The direction comes from an exact rational nullspace vector; only the
    final normalisation is done in floating point.  The sign is fixed so that
    the first nonzero coordinate is positive.
    """
    A = np.asarray(cols)
    if A.ndim != 2:
        raise ValueError("cols must be a list of vectors")
    k, n = A.shape
    if n < 2 or k != n - 1:
        raise ValueError(f"need n-1 columns in Z^n with n >= 2, got {k} columns of length {n}")
    ech, pivots = echelon_exact(A)
    if len(pivots) < n - 1:
        raise DegenerateNullspace(n - len(pivots))
    free = next(c for c in range(n) if c not in pivots)
    y = [Fraction(0)] * n
    y[free] = Fraction(1)
    for r in range(len(pivots) - 1, -1, -1):
        c = pivots[r]
        acc = sum((ech[r, j] * y[j] for j in range(c + 1, n) if ech[r, j] != 0), Fraction(0))
        y[c] = -acc / ech[r, c]
    lcm = 1
    for v in y:
        lcm = lcm * v.denominator // math.gcd(lcm, v.denominator)
    ints = [int(v * lcm) for v in y]
    g = 0
    for v in ints:
        g = math.gcd(g, v)
    ints = [v // g for v in ints]
    if next(v for v in ints if v != 0) < 0:
        ints = [-v for v in ints]
    big = max(abs(v) for v in ints)
    coords = np.array([float(Fraction(v, big)) for v in ints])
    coords /= np.linalg.norm(coords)
    residual = float(np.max(np.abs(A.astype(float) @ coords)))
    return NormalVector(coords=coords, residual=residual, integer=tuple(ints))


def singular_values(M) -> np.ndarray:
    return np.linalg.svd(np.asarray(M, dtype=float), compute_uv=False)


def smin(M) -> float:
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError("smin needs a square matrix")
    return float(singular_values(M)[-1])


def spectral_norm(M) -> float:
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError("spectral_norm needs a square matrix")
    return float(singular_values(M)[0])
