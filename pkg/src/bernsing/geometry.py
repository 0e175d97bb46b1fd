"""Compressible vectors, sorting permutations and lattice discretization domains."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from math import comb, isqrt

import numpy as np

from .model import to_rational

COMP = "Comp"
INCOMP = "Incomp"


@dataclass(frozen=True)
class IncompParams:
    delta: float
    nu: float

    def __post_init__(self):
        if not 0 < self.delta <= 1:
            raise ValueError("delta must lie in (0, 1]")
        if not 0 < self.nu <= 1:
            raise ValueError("nu must lie in (0, 1]")


@dataclass(frozen=True)
class CoordinateSet:
    """Origin-symmetric integer set ``[-outer, outer]`` with ``[-hole, hole]`` removed.

    ``hole = -1`` means nothing is removed, giving a single interval.
    Stored by endpoints only.
    """

    outer: int
    hole: int = -1

    def __post_init__(self):
        if self.outer < 0 or self.hole < -1 or self.hole >= self.outer:
            raise ValueError(f"bad coordinate set outer={self.outer} hole={self.hole}")

    @property
    def intervals(self) -> tuple:
        if self.hole < 0:
            return ((-self.outer, self.outer),)
        return ((-self.outer, -self.hole - 1), (self.hole + 1, self.outer))

    @property
    def is_interval(self) -> bool:
        return self.hole < 0

    def cardinality(self) -> int:
        return 2 * self.outer + 1 - (2 * self.hole + 1 if self.hole >= 0 else 0)

    def max_element(self) -> int:
        return self.outer

    def min_abs(self) -> int:
        return self.hole + 1 if self.hole >= 0 else 0

    def __contains__(self, v) -> bool:
        return self.min_abs() <= abs(int(v)) <= self.outer

    def elements(self) -> np.ndarray:
        return np.concatenate([np.arange(a, b + 1) for a, b in self.intervals])

    def sample(self, rng: np.random.Generator, size=None):
        """Uniform draws by index arithmetic; no element list is built."""
        k = rng.integers(0, self.cardinality(), size=size)
        if self.hole < 0:
            return k - self.outer
        half = self.outer - self.hole
        return np.where(k < half, k - self.outer, k - half + self.hole + 1)


@dataclass(frozen=True)
class AdmissibleSet:
    coordinate_sets: tuple
    N: int
    K: float | None = None
    delta: Fraction = Fraction(1, 2)
    mode: str = ""

    @property
    def n(self) -> int:
        return len(self.coordinate_sets)

    def cardinalities(self) -> list[int]:
        return [c.cardinality() for c in self.coordinate_sets]

    def log_volume(self) -> float:
        return float(sum(math.log(c) for c in self.cardinalities()))

    def max_element(self) -> int:
        return max(c.max_element() for c in self.coordinate_sets)

    def sample(self, rng: np.random.Generator, count: int | None = None) -> np.ndarray:
        size = None if count is None else (count,)
        cols = [c.sample(rng, size) for c in self.coordinate_sets]
        return np.stack(cols, axis=-1).astype(np.int64)

    def __contains__(self, v) -> bool:
        v = list(v)
        return len(v) == self.n and all(x in c for x, c in zip(v, self.coordinate_sets))


@dataclass(frozen=True)
class AdmissibilityReport:
    passed: bool
    violations: tuple = ()
    log_volume: float = 0.0
    required_K: float = 0.0
    details: dict = field(default_factory=dict)


def special_permutation(x) -> np.ndarray:
    """0-based indices ordering ``|x_i|`` decreasingly, ties by ascending index."""
    return np.argsort(-np.abs(np.asarray(x, dtype=float)), kind="stable")


def sparse_tail(x, k: int) -> tuple[np.ndarray, float]:
    """Indices of the ``k`` largest magnitudes and the Euclidean norm of the rest."""
    x = np.asarray(x, dtype=float)
    if not 0 <= k <= len(x):
        raise ValueError("k must lie in [0, n]")
    order = special_permutation(x)
    return np.sort(order[:k]), float(np.linalg.norm(x[order[k:]]))


def _check_unit(x: np.ndarray):
    if abs(np.linalg.norm(x) - 1) > 1e-10:
        raise ValueError("expected a unit vector")


def heavy_count(n: int, delta) -> int:
    return math.floor(to_rational(delta) * n)


def classify_compressible(x, params: IncompParams) -> str:
    """``Comp`` if ``x`` lies within ``nu`` of a ``floor(delta n)``-sparse vector (boundary included)."""
    x = np.asarray(x, dtype=float)
    _check_unit(x)
    _, tail = sparse_tail(x, heavy_count(len(x), params.delta))
    return COMP if tail <= params.nu else INCOMP


def incomp_coordinate_count(x, params: IncompParams) -> int:
    x = np.asarray(x, dtype=float)
    _check_unit(x)
    return int(np.count_nonzero(np.abs(x) >= params.nu / math.sqrt(len(x))))


def permutation_family_size(n: int, delta) -> int:
    """Number of nested chains ``[n] > I_0 > ... > I_j0`` with ``|I_j| = floor(2^-j delta n)``."""
    dn = to_rational(delta) * n
    if dn < 1:
        return 1
    sizes = []
    j = 0
    while 2**j <= dn:
        sizes.append(math.floor(dn / 2**j))
        j += 1
    total, prev = 1, n
    for m in sizes:
        total *= comb(prev, m)
        prev = m
    return total


def _ceil_sqrt(q: Fraction) -> int:
    """Exact ``ceil(sqrt(q))`` for a nonnegative rational."""
    a, b = q.numerator, q.denominator
    m = isqrt(a // b)
    while m * m * b < a:
        m += 1
    while m > 0 and (m - 1) * (m - 1) * b >= a:
        m -= 1
    return m


def _dyadic_block(i: int, dn: Fraction) -> int:
    j = 1
    while dn / 2**j >= i:
        j += 1
    return j


def build_discretization_domain(mode: str, n: int, delta, nu=None, T_or_N=None) -> AdmissibleSet:
    """Product domain used by the averaging experiments.

    ``theorem-b``: ``floor(delta n)`` coordinates uniform on ``+-{N+1..2N}``, the
    rest on ``{-N..N}``; ``T_or_N`` is ``N``.

    ``section-5``: the rescaled range of rounded incompressible normals at
    threshold scale ``T`` (``T_or_N``); needs ``nu / T >= 2`` and sets
    ``N = floor(nu / T) - 1``.  All ceilings are evaluated exactly.
    """
    delta = to_rational(delta)
    if n < 1:
        raise ValueError("n must be positive")
    if not 0 < delta <= 1:
        raise ValueError("delta must lie in (0, 1]")
    if mode == "theorem-b":
        N = int(T_or_N)
        if N < 1:
            raise ValueError("N must be a positive integer")
        h = heavy_count(n, delta)
        sets = [CoordinateSet(2 * N, N)] * h + [CoordinateSet(N)] * (n - h)
        return AdmissibleSet(tuple(sets), N=N, delta=delta, mode=mode)
    if mode == "section-5":
        nu, T = to_rational(nu), to_rational(T_or_N)
        if not 0 < T <= 1 or not 0 < nu <= 1:
            raise ValueError("need T in (0, 1] and nu in (0, 1]")
        if nu / T < 2:
            raise ValueError("need nu / T >= 2")
        F = math.floor(nu / T)
        N = F - 1
        dn = delta * n
        tail_outer = _ceil_sqrt(8 / (delta * T * T)) + 1
        sets = []
        for i in range(1, n + 1):
            if i == 1:
                outer = _ceil_sqrt(4 * n / (T * T)) + 1
                sets.append(CoordinateSet(outer, F - 1))
            elif i <= dn:
                j = _dyadic_block(i, dn)
                outer = _ceil_sqrt(Fraction(2 ** (j + 3)) / (delta * T * T)) + 1
                sets.append(CoordinateSet(outer, F - 1))
            else:
                sets.append(CoordinateSet(tail_outer))
        return AdmissibleSet(tuple(sets), N=N, delta=delta, mode=mode)
    raise ValueError(f"unknown mode {mode!r}")


def check_admissible(A: AdmissibleSet, N: int, n: int, K: float, delta) -> AdmissibilityReport:
    """Test the five defining clauses; failures are reported, not raised."""
    delta = to_rational(delta)
    bad = []
    if A.n != n or not all(isinstance(c, CoordinateSet) for c in A.coordinate_sets):
        bad.append("product")
    for i, c in enumerate(A.coordinate_sets, start=1):
        if i > delta * n:
            if not (c.is_interval and c.cardinality() >= 2 * N + 1):
                bad.append(f"interval:{i}")
        elif not (c.min_abs() > N and c.cardinality() >= 2 * N):
            bad.append(f"separated:{i}")
    logvol = A.log_volume()
    if logvol > n * math.log(K * N) + 1e-9 * max(1.0, abs(logvol)):
        bad.append("volume")
    if A.max_element() >= n * N:
        bad.append("max")
    # keep the first failing index per clause family, in clause order
    families = []
    for v in bad:
        key = v.split(":")[0]
        if key not in [f.split(":")[0] for f in families]:
            families.append(v)
    return AdmissibilityReport(
        passed=not bad,
        violations=tuple(families),
        log_volume=logvol,
        required_K=math.exp(logvol / n) / N,
        details={"chains": permutation_family_size(n, delta), "all_violations": tuple(bad)},
    )
