"""Laws of Bernoulli-weighted sums and Lévy concentration machinery.

Two numeric modes run through the module.  Exact mode keeps probabilities
and support points as :class:`fractions.Fraction` (numpy object arrays);
float mode uses float64.  In float mode the accumulated error of a law built
from ``n`` convolutions is at most about ``n`` ulp per atom.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .model import to_rational
from .rng import generator
from .stats import wilson_interval

DEFAULT_SUPPORT_CAP = 5_000_000
MAX_ENUMERATION = 25


class BudgetExceeded(RuntimeError):
    pass


@dataclass(frozen=True)
class IntegerPMF:
    """Finite law on Z: sorted ``support`` with matching ``probs``."""

    support: np.ndarray
    probs: np.ndarray
    exact: bool = False

    def __post_init__(self):
        if len(self.support) != len(self.probs):
            raise ValueError("support and probs differ in length")
        if len(self.support) > 1 and np.any(np.diff(self.support.astype(np.int64)) <= 0):
            raise ValueError("support must be strictly increasing")

    @classmethod
    def from_dict(cls, atoms: dict, exact: bool | None = None) -> "IntegerPMF":
        keys = sorted(k for k, v in atoms.items() if v != 0)
        if exact is None:
            exact = all(isinstance(atoms[k], (int, Fraction)) for k in keys)
        probs = [atoms[k] for k in keys]
        return cls(
            support=np.array(keys, dtype=np.int64),
            probs=np.array(probs, dtype=object if exact else float),
            exact=exact,
        )

    def as_dict(self) -> dict:
        return {int(s): q for s, q in zip(self.support, self.probs)}

    def total(self):
        return sum(self.probs, Fraction(0)) if self.exact else float(np.sum(self.probs))

    def shift(self, c: int) -> "IntegerPMF":
        return IntegerPMF(self.support + int(c), self.probs.copy(), self.exact)

    def negate(self) -> "IntegerPMF":
        return IntegerPMF(-self.support[::-1], self.probs[::-1].copy(), self.exact)

    def scale(self, k: int) -> "IntegerPMF":
        if k <= 0:
            raise ValueError("scale factor must be positive")
        return IntegerPMF(self.support * int(k), self.probs.copy(), self.exact)


@dataclass(frozen=True)
class ThresholdQuery:
    L: float
    p: Fraction = Fraction(1, 2)

    def __post_init__(self):
        if not self.L > 0:
            raise ValueError("L must be positive")


@dataclass(frozen=True)
class LcdParams:
    c_prime: float = 0.5
    c: float = 0.3
    lambda_max: float = 100.0
    grid: float = 1e-3

    def __post_init__(self):
        if not 0 < self.c_prime < 1:
            raise ValueError("c_prime must lie in (0, 1)")
        if not self.c > 0:
            raise ValueError("c must be positive")


def _is_integer_vector(x) -> bool:
    arr = np.asarray(x)
    if np.issubdtype(arr.dtype, np.integer):
        return True
    if arr.dtype == object:
        return all(isinstance(v, int) or (isinstance(v, Fraction) and v.denominator == 1) for v in arr.ravel())
    return False


def walk_pmf(x, p, exact: bool = False, cap: int = DEFAULT_SUPPORT_CAP) -> IntegerPMF:
    """Law of ``sum_i b_i x_i`` for integer ``x`` and i.i.d. Bernoulli(p) ``b_i``.

    Built by one two-point convolution per coordinate.  Exact mode keeps a
    sparse dict of Fractions; float mode uses a dense array over
    ``[sum min(x_i, 0), sum max(x_i, 0)]``.
    """
    xs = [int(v) for v in np.asarray(x, dtype=object).ravel()]
    lo = sum(min(v, 0) for v in xs)
    hi = sum(max(v, 0) for v in xs)
    if hi - lo + 1 > cap:
        raise BudgetExceeded(f"support width {hi - lo + 1} exceeds cap {cap}")
    if exact:
        p = to_rational(p)
        q = 1 - p
        atoms = {0: Fraction(1)}
        for v in xs:
            if v == 0:
                continue
            nxt: dict = {}
            for s, w in atoms.items():
                nxt[s] = nxt.get(s, 0) + w * q
                nxt[s + v] = nxt.get(s + v, 0) + w * p
            atoms = nxt
        return IntegerPMF.from_dict(atoms, exact=True)
    lo, dense = dense_walk(xs, float(p), cap)
    nz = np.nonzero(dense)[0]
    return IntegerPMF(support=(nz + lo).astype(np.int64), probs=dense[nz], exact=False)


def dense_walk(x, p, cap: int = DEFAULT_SUPPORT_CAP) -> tuple[int, np.ndarray]:
    """Float law of ``sum b_i x_i`` as ``(offset, dense probabilities)``."""
    xs = [int(v) for v in x]
    lo = sum(min(v, 0) for v in xs)
    hi = sum(max(v, 0) for v in xs)
    if hi - lo + 1 > cap:
        raise BudgetExceeded(f"support width {hi - lo + 1} exceeds cap {cap}")
    dense = np.zeros(hi - lo + 1)
    dense[-lo] = 1.0
    a, b = -lo, -lo
    for v in xs:
        if v == 0:
            continue
        seg = dense[a : b + 1].copy()
        dense[a : b + 1] *= 1 - p
        dense[a + v : b + 1 + v] += p * seg
        a, b = min(a, a + v), max(b, b + v)
    return lo, dense


def _cumulative(probs: np.ndarray) -> np.ndarray:
    if probs.dtype == object:
        out = np.empty(len(probs) + 1, dtype=object)
        out[0] = Fraction(0)
        out[1:] = np.cumsum(probs)
        return out
    return np.concatenate(([0.0], np.cumsum(probs)))


def _max_window(points: np.ndarray, cum: np.ndarray, width, strict: bool = False):
    """Largest mass of atoms inside a window ``[a, a + width]`` (open on the right if strict)."""
    side = "left" if strict else "right"
    j = np.searchsorted(points, points + width, side=side)
    return (cum[j] - cum[:-1]).max()


def levy(Z: IntegerPMF, t) -> float | Fraction:
    """Lévy concentration ``sup_lambda P{|Z - lambda| <= t}``.

    Some optimal window has an atom at its left edge, so sliding a window of
    width ``2t`` across the sorted support finds the supremum exactly.
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    if len(Z.support) == 0:
        return Fraction(0) if Z.exact else 0.0
    points = Z.support.astype(object) if Z.exact else Z.support
    width = 2 * Fraction(t) if Z.exact else 2 * float(t)
    return _max_window(points, _cumulative(Z.probs), width)


def subset_sums(x, p, exact: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """All ``2**n`` values ``sum v_i x_i`` and their weights ``p^|v| (1-p)^(n-|v|)``."""
    n = len(x)
    if n > MAX_ENUMERATION:
        raise ValueError(f"enumeration needs n <= {MAX_ENUMERATION}, got {n}")
    if exact:
        p = to_rational(p)
        q = 1 - p
        sums, weights = [Fraction(0)], [Fraction(1)]
        for v in x:
            v = to_rational(v)
            sums = sums + [s + v for s in sums]
            weights = [w * q for w in weights] + [w * p for w in weights]
        return np.array(sums, dtype=object), np.array(weights, dtype=object)
    p = float(p)
    sums = np.zeros(1)
    weights = np.ones(1)
    for v in np.asarray(x, dtype=float):
        sums = np.concatenate((sums, sums + v))
        weights = np.concatenate((weights * (1 - p), weights * p))
    return sums, weights


def _wants_exact(x, p) -> bool:
    return _is_integer_vector(x) and isinstance(p, (Fraction, int))


def levy_brute(x, p, t, lam=None, exact: bool | None = None):
    """``P{|sum b_i x_i - lam| <= t}`` by enumerating all ``2**n`` outcomes.

    With ``lam`` omitted the supremum over ``lam`` is taken via the sorted
    subset sums.  Intended as an oracle for ``n <= 25``.
    """
    if exact is None:
        exact = _wants_exact(x, p)
    sums, weights = subset_sums(x, p, exact=exact)
    if exact:
        t = to_rational(t)
    if lam is not None:
        if exact:
            lam = to_rational(lam)
            return sum((w for s, w in zip(sums, weights) if abs(s - lam) <= t), Fraction(0))
        return float(weights[np.abs(sums - float(lam)) <= float(t)].sum())
    order = np.argsort(sums, kind="stable")
    return _max_window(sums[order], _cumulative(weights[order]), 2 * t)


def shifted_small_ball(y, lam, p, t, trials: int = 100_000, seed=0, return_ci: bool = False):
    """``P{|sum b_i y_i - lam| <= t}``: exact for ``n <= 25``, Monte Carlo above.

    With ``return_ci`` the result is ``(estimate, ci_low, ci_high)``; the
    interval collapses to the estimate in exact mode.
    """
    y = np.asarray(y, dtype=float)
    if len(y) <= MAX_ENUMERATION:
        val = levy_brute(y, float(p), float(t), lam=float(lam), exact=False)
        return (val, val, val) if return_ci else val
    rng = generator(seed)
    hits = 0
    chunk = max(1, min(trials, 2**22 // max(len(y), 1)))
    done = 0
    while done < trials:
        m = min(chunk, trials - done)
        b = rng.random((m, len(y))) < float(p)
        hits += int(np.count_nonzero(np.abs(b @ y - float(lam)) <= float(t)))
        done += m
    est = hits / trials
    if return_ci:
        lo, hi = wilson_interval(hits, trials)
        return est, lo, hi
    return est


def _law(x, p, exact: bool):
    """Sorted support points and cumulative mass for the law of ``sum b_i x_i``."""
    if _is_integer_vector(x):
        Z = walk_pmf(x, p, exact=exact)
        points = Z.support.astype(object) if exact else Z.support.astype(float)
        return points, _cumulative(Z.probs)
    sums, weights = subset_sums(x, p, exact=exact)
    order = np.argsort(sums, kind="stable")
    return sums[order], _cumulative(weights[order])


def threshold(x, L, p=Fraction(1, 2), exact: bool | None = None):
    """``sup{t in (0, 1] : L(sum b_i x_i, t) > L t}``, computed exactly.

    ``t -> L(., t)`` is a right-continuous step function.  Starting from
    ``t = 1``, if the condition fails at ``t`` the supremum is at most
    ``u = L(., t) / L``; if the concentration just below ``u`` still equals
    ``L(., t)`` the supremum is ``u``, otherwise repeat with the smaller value.
    Each round strictly lowers the concentration level, so it terminates.
    """
    if isinstance(L, ThresholdQuery):
        L, p = L.L, L.p
    if not L > 0:
        raise ValueError("L must be positive")
    if exact is None:
        exact = _wants_exact(x, p) and isinstance(L, (int, Fraction))
    n = len(x)
    if not _is_integer_vector(x) and n > MAX_ENUMERATION:
        raise ValueError(f"exact threshold for real vectors needs n <= {MAX_ENUMERATION}")
    points, cum = _law(x, p, exact)
    if exact:
        L = to_rational(L)
        one = Fraction(1)
    else:
        L = float(L)
        one = 1.0
    v = _max_window(points, cum, 2 * one)
    if v > L * one:
        return one
    while True:
        u = v / L
        below = _max_window(points, cum, 2 * u, strict=True)
        if below >= v:
            break
        v = below
    floor = (1 - (to_rational(p) if exact else float(p))) ** n / L
    return max(u, min(floor, one))


def anticoncentration_radius(x, p):
    """Largest ``r`` with ``L(sum b_i x_i, s) <= 1 - p`` for every ``s < r``.

    Returns 0 when the largest atom already exceeds ``1 - p``.
    """
    points, cum = _law(x, p, exact=False)
    limit = 1 - float(p)
    if np.max(np.diff(cum)) > limit + 1e-15:
        return 0.0
    # first right end j where mass(i..j) exceeds 1 - p
    j = np.searchsorted(cum, cum[:-1] + limit + 1e-15, side="right") - 1
    ok = j < len(points)
    if not ok.any():
        return math.inf
    gaps = points[j[ok]] - points[ok]
    return float(gaps.min()) / 2


def lcd(x, params: LcdParams = LcdParams()) -> float:
    """Essential least common denominator of a unit vector.

    Smallest ``lam`` in ``(0, lambda_max]`` with
    ``dist(lam x, Z^n) <= min(c' lam ||x||, c sqrt(n))``: a grid scan followed
    by bisection down to 1e-9.  Returns ``inf`` when no such ``lam`` exists.
    """
    x = np.asarray(x, dtype=float)
    norm = np.linalg.norm(x)
    if abs(norm - 1) > 1e-10:
        raise ValueError("lcd expects a unit vector")
    cap = params.c * math.sqrt(len(x))

    def gap(lams):
        lams = np.atleast_1d(lams)
        pts = lams[:, None] * x[None, :]
        dist = np.linalg.norm(pts - np.round(pts), axis=1)
        return dist - np.minimum(params.c_prime * lams * norm, cap)

    step = params.grid
    total = int(math.floor(params.lambda_max / step))
    chunk = max(1, 2**20 // max(len(x), 1))
    k0 = 1
    while k0 <= total:
        ks = np.arange(k0, min(total, k0 + chunk - 1) + 1)
        hit = np.nonzero(gap(ks * step) <= 0)[0]
        if len(hit):
            hi = ks[hit[0]] * step
            lo = hi - step
            while hi - lo > 1e-9:
                mid = (lo + hi) / 2
                if gap(mid)[0] <= 0:
                    hi = mid
                else:
                    lo = mid
            return float(hi)
        k0 = ks[-1] + 1
    return math.inf


def rogozin_bound(levies, r, C: float = 1.0) -> float:
    """``C r / sqrt(sum (1 - L_i) r_i^2)`` for pairs ``(1 - L(xi_i, r_i), r_i)``."""
    if not C > 0:
        raise ValueError("C must be positive")
    levies = list(levies)
    if levies and r < max(ri for _, ri in levies):
        raise ValueError("r must be at least max r_i")
    denom = sum(gap * ri * ri for gap, ri in levies)
    if denom <= 0:
        return math.inf
    return C * r / math.sqrt(denom)


def tensorization_bound(variant: int, C: float = 1.0, **args) -> float:
    """Small-ball bound for ``||(xi_1..xi_m)||_2``.

    Variant 1 takes ``K, eps, m`` (and ``eps0``) and returns ``(C K eps)^m``.
    Variant 2 takes ``tau, eps, m`` and returns ``(e/eps)^(eps m) tau^(m - eps m)``.
    """
    if variant == 1:
        K, eps, m = args["K"], args["eps"], args["m"]
        if eps < args.get("eps0", 0) or eps <= 0:
            raise ValueError("variant 1 needs eps >= eps0 > 0")
        return (C * K * eps) ** m
    if variant == 2:
        tau, eps, m = args["tau"], args["eps"], args["m"]
        if not 0 < eps <= 1:
            raise ValueError("variant 2 needs eps in (0, 1]")
        if tau < 0:
            raise ValueError("tau must be nonnegative")
        return (math.e / eps) ** (eps * m) * tau ** (m - eps * m)
    raise ValueError("variant must be 1 or 2")
