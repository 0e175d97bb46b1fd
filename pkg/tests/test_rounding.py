import math
from dataclasses import replace

import numpy as np
import pytest

from bernsing.concentration import levy_brute, subset_sums, threshold
from bernsing.geometry import INCOMP, IncompParams, classify_compressible
from bernsing.rng import RngSeed, generator
from bernsing.rounding import (
    BudgetExhausted,
    CertificateInvalid,
    HypothesisFailed,
    RoundingConstants,
    _bit_matrix,
    _checks,
    _outcome_weights,
    construct_Y,
    hypothesis_slope,
    levy_at,
    max_slope,
    randomized_round,
    rounding_candidates,
    verify_rounding,
)
from oracles import sup_slope_grid


def random_instance(rng, n=12):
    y = rng.uniform(-50, 50, n)
    lam = 0.5 * y.sum()
    return y, lam, hypothesis_slope(y, lam, 0.5)


def test_integer_input_passes_immediately():
    y = np.array([3.0, -2.0, 7.0, 0.0])
    lam = 0.5 * y.sum()
    cert = randomized_round(y, lam, 0.5, hypothesis_slope(y, lam, 0.5), seed=1)
    assert cert.attempts == 1
    assert np.array_equal(cert.y_prime, y)
    assert cert.checks["sum_gap"]["measured"] == 0
    assert cert.passed


def test_half_vector():
    y = np.full(4, 0.5)
    lam = 0.5 * y.sum()
    cert = randomized_round(y, lam, 0.5, hypothesis_slope(y, lam, 0.5), seed=2)
    assert cert.passed and verify_rounding(cert)
    for yp in rounding_candidates(y, generator(3), 500):
        assert np.max(np.abs(yp - y)) <= 1


def test_hypothesis_failure():
    y = np.array([0.1, 0.2, 0.3])
    with pytest.raises(HypothesisFailed):
        randomized_round(y, 0.3, 0.5, 1e-3)


def test_budget_exhaustion():
    y = np.array([0.5, 0.5, 0.5, 0.5])
    lam = 1.0
    L = hypothesis_slope(y, lam, 0.5)
    tight = RoundingConstants(C=1e-9, c=10, sum_bound=0)
    with pytest.raises(BudgetExhausted) as e:
        randomized_round(y, lam, 0.5, L, constants=tight, budget=50, seed=4)
    assert e.value.attempts == 50
    assert e.value.best_partial is not None


def test_verify_round_trip_and_tamper():
    rng = generator(RngSeed(5, ("verify",)))
    for _ in range(100):
        y, lam, L = random_instance(rng)
        cert = randomized_round(y, lam, 0.5, L, seed=rng.integers(2**32))
        report = verify_rounding(cert)
        assert all(r["passed"] and r["agrees"] for r in report.values())
    bad = cert.y_prime.copy()
    bad[0] += 3
    with pytest.raises(CertificateInvalid, match="sup_distance"):
        verify_rounding(replace(cert, y_prime=bad))
    lying = dict(cert.checks)
    lying["slope"] = dict(lying["slope"], measured=lying["slope"]["measured"] * 0.5)
    with pytest.raises(CertificateInvalid):
        verify_rounding(replace(cert, checks=lying))


def test_max_slope_matches_grid():
    rng = generator(6)
    for _ in range(30):
        y = rng.uniform(-10, 10, 6)
        sums, w = subset_sums(y, 0.5)
        lam = float(rng.uniform(-10, 10))
        t0 = math.sqrt(6)
        exact = max_slope(sums, w, lam, t0)
        grid = sup_slope_grid(sums, w, lam, t0, 200.0)
        assert exact == pytest.approx(grid, rel=1e-12)


def test_levy_at_matches_brute():
    rng = generator(7)
    for _ in range(30):
        y = rng.uniform(-10, 10, 7)
        sums, w = subset_sums(y, 0.3)
        assert levy_at(sums, w, 2.0) == pytest.approx(levy_brute(y, 0.3, 2.0), abs=1e-12)


def test_unbiased_rounding():
    y = np.array([0.3, -1.75, 4.5, 2.0, -0.01])
    m = 10**5
    Y = rounding_candidates(y, generator(RngSeed(8, ("mean",))), m)
    var = (y - np.floor(y)) * (1 - (y - np.floor(y)))
    assert np.all(var <= 0.25)
    for i in range(len(y)):
        sigma = math.sqrt(var[i] / m)
        assert abs(Y[:, i].mean() - y[i]) <= 4 * sigma + 1e-15
    gap = (y - Y).sum(axis=1)
    assert abs(gap.mean()) <= 4 * math.sqrt(var.sum() / m)


def test_acceptance_monotone_in_constants():
    rng = generator(RngSeed(9, ("monotone",)))
    ladder = [
        RoundingConstants(C=1.0, c=0.9, sum_bound=0.3),
        RoundingConstants(C=2.0, c=0.5, sum_bound=0.6),
        RoundingConstants(C=8.0, c=1 / 8, sum_bound=math.sqrt(12 / 11)),
        RoundingConstants(C=20.0, c=1 / 20, sum_bound=2.0),
    ]
    for _ in range(20):
        y, lam, L = random_instance(rng, 10)
        V = _bit_matrix(10)
        w = _outcome_weights(V, 0.5)
        levy_y = levy_at(V @ y, w, math.sqrt(10))
        cands = rounding_candidates(y, generator(rng.integers(2**32)), 200)
        rates = []
        for k in ladder:
            ok = [all(c["passed"] for c in _checks(y, yp, lam, L, k, V @ yp, w, levy_y, 10).values()) for yp in cands]
            rates.append(ok)
        for tight, loose in zip(rates, rates[1:]):
            # pointwise: every sample accepted under tighter constants is accepted under looser ones
            assert all(b for a, b in zip(tight, loose) if a)
            assert sum(loose) >= sum(tight)


def test_construct_Y_incompressible():
    rng = generator(RngSeed(10, ("Y",)))
    done = 0
    while done < 5:
        x = rng.normal(size=12)
        x /= np.linalg.norm(x)
        if classify_compressible(x, IncompParams(0.25, 0.25)) != INCOMP:
            continue
        L = 10.0
        res = construct_Y(0.5, x, L, -0.5, seed=done)
        assert all(res.properties.values()), res.properties
        assert np.max(np.abs(res.Y - res.scale * x)) <= 1
        assert L * res.T >= 0.5**12 - 1e-15
        verify_rounding(res.certificate)
        done += 1


def test_construct_Y_one_dimensional():
    res = construct_Y(0.5, [1.0], 4.0, 0, seed=1)
    assert res.T == pytest.approx(threshold([1.0], 4.0, 0.5))
    assert abs(res.Y[0] - res.scale) <= 1
    with pytest.raises(ValueError):
        construct_Y(0.5, [1.0], 4.0, 0.5)
