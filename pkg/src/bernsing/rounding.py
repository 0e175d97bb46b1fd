"""Randomized rounding to Z^n that keeps small-ball estimates, with certificates.

Every certificate is checked against the exact law of ``sum b_i y_i`` obtained
by enumerating all ``2**n`` Bernoulli outcomes, so ``n`` is limited to 25.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .concentration import MAX_ENUMERATION, subset_sums, threshold
from .rng import generator

DEFAULT_C = 8.0
DEFAULT_c = 1 / 8
DEFAULT_SUM_BOUND = math.sqrt(12 / 11)
DEFAULT_BUDGET = 10_000
BULLETS = ("sup_distance", "slope", "levy_ratio", "sum_gap")


class BudgetExhausted(RuntimeError):
    def __init__(self, attempts: int, best_partial):
        super().__init__(f"no certified rounding after {attempts} attempts")
        self.attempts = attempts
        self.best_partial = best_partial


class HypothesisFailed(ValueError):
    pass


class CertificateInvalid(AssertionError):
    pass


@dataclass(frozen=True)
class RoundingConstants:
    C: float = DEFAULT_C
    c: float = DEFAULT_c
    sum_bound: float = DEFAULT_SUM_BOUND


@dataclass(frozen=True)
class RoundingCertificate:
    y: np.ndarray
    y_prime: np.ndarray
    lam: float
    p: float
    L: float
    checks: dict
    constants: RoundingConstants
    attempts: int = 1
    exact: bool = True

    @property
    def passed(self) -> bool:
        return all(c["passed"] for c in self.checks.values())


def _bit_matrix(n: int) -> np.ndarray:
    """All of {0,1}^n as rows, row k holding the binary digits of k."""
    if n > MAX_ENUMERATION:
        raise ValueError(f"exact certificates need n <= {MAX_ENUMERATION}")
    k = np.arange(2**n, dtype=np.int64)
    return ((k[:, None] >> np.arange(n)) & 1).astype(np.float64)


def _outcome_weights(V: np.ndarray, p: float) -> np.ndarray:
    ones = V.sum(axis=1)
    return p**ones * (1 - p) ** (V.shape[1] - ones)


def max_slope(sums: np.ndarray, weights: np.ndarray, lam: float, t0: float) -> float:
    """``sup_{t >= t0} P{|S - lam| <= t} / t`` for the discrete law ``(sums, weights)``.

    Between consecutive distances the probability is constant and ``1/t``
    decreases, so only ``t0`` and the distances beyond it matter.
    """
    d = np.abs(np.asarray(sums, dtype=float) - lam)
    order = np.argsort(d, kind="stable")
    d, cum = d[order], np.cumsum(np.asarray(weights, dtype=float)[order])
    at_t0 = cum[np.searchsorted(d, t0, side="right") - 1] if d[0] <= t0 else 0.0
    best = at_t0 / t0
    beyond = d > t0
    if beyond.any():
        # the mass at a distance includes every tied atom
        last = np.searchsorted(d, d[beyond], side="right") - 1
        best = max(best, float((cum[last] / d[beyond]).max()))
    return float(best)


def levy_at(sums: np.ndarray, weights: np.ndarray, t: float) -> float:
    """Concentration ``sup_lam P{|S - lam| <= t}`` by a sliding window over sorted sums."""
    order = np.argsort(sums, kind="stable")
    s = np.asarray(sums, dtype=float)[order]
    cum = np.concatenate(([0.0], np.cumsum(np.asarray(weights, dtype=float)[order])))
    j = np.searchsorted(s, s + 2 * t, side="right")
    return float((cum[j] - cum[:-1]).max())


def _checks(y, yp, lam, L, consts, sums_p, weights, levy_y, n) -> dict:
    root = math.sqrt(n)
    dist = float(np.max(np.abs(y - yp))) if n else 0.0
    slope = max_slope(sums_p, weights, lam, root)
    lev = levy_at(sums_p, weights, root)
    gap = abs(float(np.sum(y) - np.sum(yp)))
    return {
        "sup_distance": {"passed": dist <= 1, "measured": dist, "bound": 1.0},
        "slope": {"passed": slope <= consts.C * L, "measured": slope, "bound": consts.C * L},
        "levy_ratio": {"passed": lev >= consts.c * levy_y, "measured": lev, "bound": consts.c * levy_y},
        "sum_gap": {"passed": gap <= consts.sum_bound * root, "measured": gap, "bound": consts.sum_bound * root},
    }


def hypothesis_slope(y, lam, p) -> float:
    """Smallest ``L`` with ``P{|sum b_i y_i - lam| <= t} <= L t`` for all ``t >= sqrt(n)``."""
    y = np.asarray(y, dtype=float)
    V = _bit_matrix(len(y))
    return max_slope(V @ y, _outcome_weights(V, float(p)), float(lam), math.sqrt(len(y)))


def rounding_candidates(y, rng: np.random.Generator, count: int) -> np.ndarray:
    """Independent roundings: ``floor(y_i) + 1`` with probability ``y_i - floor(y_i)``."""
    y = np.asarray(y, dtype=float)
    low = np.floor(y)
    up = rng.random((count, len(y))) < (y - low)
    return (low + up).astype(np.int64)


def randomized_round(
    y,
    lam,
    p,
    L,
    constants: RoundingConstants = RoundingConstants(),
    budget: int = DEFAULT_BUDGET,
    seed=0,
    tol: float = 1e-9,
) -> RoundingCertificate:
    """Round ``y`` to the lattice until all four checks pass.

    The hypothesis ``P{|sum b_i y_i - lam| <= t} <= L t`` for ``t >= sqrt(n)``
    is verified first (relative slack ``tol`` absorbs float rounding in the
    subset sums).  Candidates are drawn in batches from one seeded stream;
    the first passing candidate in draw order is returned.
    """
    y = np.asarray(y, dtype=float)
    n = len(y)
    p, lam, L = float(p), float(lam), float(L)
    V = _bit_matrix(n)
    w = _outcome_weights(V, p)
    sums_y = V @ y
    root = math.sqrt(n)
    slope = max_slope(sums_y, w, lam, root)
    if slope > L * (1 + tol):
        raise HypothesisFailed(f"small-ball slope {slope:.6g} exceeds L = {L:.6g}")
    levy_y = levy_at(sums_y, w, root)
    rng = generator(seed)
    best, best_score = None, -1
    attempts = 0
    batch = 64
    while attempts < budget:
        cands = rounding_candidates(y, rng, min(batch, budget - attempts))
        for yp in cands:
            attempts += 1
            checks = _checks(y, yp, lam, L, constants, V @ yp, w, levy_y, n)
            score = sum(c["passed"] for c in checks.values())
            cert = RoundingCertificate(y.copy(), yp.copy(), lam, p, L, checks, constants, attempts)
            if score == len(BULLETS):
                return cert
            if score > best_score:
                best, best_score = cert, score
    raise BudgetExhausted(attempts, best)


def verify_rounding(cert: RoundingCertificate, p=None, rtol: float = 1e-9) -> dict:
    """Recompute every check from scratch by doubling enumeration and compare.

    Raises :class:`CertificateInvalid` when a recomputed check fails or a
    recorded quantity disagrees with the recomputation.
    """
    p = cert.p if p is None else float(p)
    y, yp = np.asarray(cert.y, dtype=float), np.asarray(cert.y_prime)
    n = len(y)
    if n > MAX_ENUMERATION:
        raise ValueError("exact verification needs n <= 25")
    if not np.all(yp == np.round(yp)):
        raise CertificateInvalid("rounded vector is not integral")
    sums_y, w_y = subset_sums(y, p)
    sums_p, w_p = subset_sums(yp.astype(float), p)
    root = math.sqrt(n)
    k = cert.constants
    levy_y = levy_at(sums_y, w_y, root)
    fresh = {
        "sup_distance": float(np.max(np.abs(y - yp))) if n else 0.0,
        "slope": max_slope(sums_p, w_p, cert.lam, root),
        "levy_ratio": levy_at(sums_p, w_p, root),
        "sum_gap": abs(float(np.sum(y) - np.sum(yp))),
    }
    bounds = {
        "sup_distance": 1.0,
        "slope": k.C * cert.L,
        "levy_ratio": k.c * levy_y,
        "sum_gap": k.sum_bound * root,
    }
    report = {}
    for name in BULLETS:
        val, bound = fresh[name], bounds[name]
        ok = val >= bound if name == "levy_ratio" else val <= bound
        recorded = cert.checks[name]["measured"]
        agrees = math.isclose(val, recorded, rel_tol=rtol, abs_tol=1e-12)
        report[name] = {"passed": ok, "measured": val, "bound": bound, "agrees": agrees}
        if not ok:
            raise CertificateInvalid(f"check {name} fails: {val} vs {bound}")
        if not agrees:
            raise CertificateInvalid(f"check {name} recorded {recorded}, recomputed {val}")
    return report


@dataclass(frozen=True)
class YConstruction:
    Y: np.ndarray
    T: float
    scale: float
    certificate: RoundingCertificate
    properties: dict = field(default_factory=dict)


def construct_Y(p, x, L, s, seed=0, constants: RoundingConstants = RoundingConstants(), budget=DEFAULT_BUDGET):
    """Integer approximation of ``(sqrt(n) / T) x`` at the threshold scale ``T`` of ``x``.

    The rounding is certified for the shifted sums ``sum b_i Y_i + s (sqrt(n)/T) sum x_i``
    with slope ``L T / sqrt(n)``.
    """
    x = np.asarray(x, dtype=float)
    n = len(x)
    if not -1 <= float(s) <= 0:
        raise ValueError("s must lie in [-1, 0]")
    T = float(threshold(x, float(L), float(p), exact=False))
    scale = math.sqrt(n) / T
    y = scale * x
    lam = -float(s) * float(np.sum(y))
    Ly = float(L) * T / math.sqrt(n)
    cert = randomized_round(y, lam, p, Ly, constants, budget, seed)
    Y = cert.y_prime
    props = {
        "sup_distance": cert.checks["sup_distance"]["measured"] <= 1,
        "shifted_slope": cert.checks["slope"]["measured"] <= constants.C * float(L) * T / math.sqrt(n),
        "levy": cert.checks["levy_ratio"]["measured"] >= constants.c / 2 * float(L) * T,
        "sum_gap": cert.checks["sum_gap"]["measured"] <= max(constants.C, constants.sum_bound) * math.sqrt(n),
    }
    return YConstruction(Y=Y, T=T, scale=scale, certificate=cert, properties=props)
