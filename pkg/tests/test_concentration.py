import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bernsing.concentration import (
    BudgetExceeded,
    IntegerPMF,
    LcdParams,
    ThresholdQuery,
    anticoncentration_radius,
    lcd,
    levy,
    levy_brute,
    rogozin_bound,
    shifted_small_ball,
    subset_sums,
    tensorization_bound,
    threshold,
    walk_pmf,
)
from bernsing.rng import RngSeed, generator
from oracles import enumerate_law, small_ball_at

HALF = Fraction(1, 2)
int_vectors = st.lists(st.integers(-30, 30), min_size=1, max_size=9)
probs = st.sampled_from([Fraction(1, 10), Fraction(3, 10), HALF, Fraction(2, 3)])


def threshold_oracle(x, L, p):
    """Evaluate the step function piece by piece from enumerated sums."""
    law = enumerate_law(x, p)
    pts = sorted(law)
    gaps = sorted({Fraction(b - a, 2) for a in pts for b in pts if b > a})
    cuts = [Fraction(0)] + [g for g in gaps if g < 1] + [Fraction(1)]

    def conc(t):
        return max(sum(w for s, w in law.items() if a <= s <= a + 2 * t) for a in pts)

    best = Fraction(0)
    if conc(Fraction(1)) > L:
        return Fraction(1)
    for lo, hi in zip(cuts, cuts[1:]):
        v = conc(lo)
        if v / L > lo:
            best = max(best, min(hi, v / L))
    return max(best, min((1 - p) ** len(x) / L, Fraction(1)))


def test_walk_pmf_examples():
    assert walk_pmf([1, 1], HALF, exact=True).as_dict() == {0: Fraction(1, 4), 1: HALF, 2: Fraction(1, 4)}
    Z = walk_pmf([1, 2, 4], HALF, exact=True)
    assert Z.as_dict() == {k: Fraction(1, 8) for k in range(8)}
    assert walk_pmf([0, 0, 0], HALF, exact=True).as_dict() == {0: 1}
    assert walk_pmf([0, 0], 0.5).as_dict() == {0: 1.0}


def test_walk_pmf_budget():
    with pytest.raises(BudgetExceeded):
        walk_pmf([10**4] * 10, HALF, cap=1000)


@settings(max_examples=80, deadline=None)
@given(int_vectors, probs)
def test_walk_pmf_matches_enumeration(x, p):
    Z = walk_pmf(x, p, exact=True)
    assert Z.as_dict() == {k: v for k, v in enumerate_law(x, p).items() if v}
    assert Z.total() == 1
    lo, hi = sum(min(v, 0) for v in x), sum(max(v, 0) for v in x)
    assert Z.support.min() >= lo and Z.support.max() <= hi
    F = walk_pmf(x, float(p))
    assert abs(F.total() - 1) <= 1e-12


def test_levy_examples():
    U = walk_pmf([1, 2, 4], HALF, exact=True)
    assert levy(U, 1) == Fraction(3, 8)
    assert levy(U, Fraction(7, 2)) == 1
    assert levy(U, 0) == Fraction(1, 8)
    Z = walk_pmf([3, 1, 1], HALF, exact=True)
    assert levy(Z, 0) == max(Z.probs)


def test_levy_brute_examples():
    assert levy_brute([1], HALF, Fraction(2, 5)) == HALF
    assert levy_brute([1.0], 0.5, 0.4) == 0.5
    assert levy_brute([1, 1], HALF, 0, lam=1) == HALF
    with pytest.raises(ValueError):
        levy_brute(list(range(26)), HALF, 1)


@settings(max_examples=100, deadline=None)
@given(int_vectors, probs, st.fractions(0, 40, max_denominator=4))
def test_levy_equals_brute(x, p, t):
    assert levy(walk_pmf(x, p, exact=True), t) == levy_brute(x, p, t, exact=True)
    assert abs(levy(walk_pmf(x, float(p)), float(t)) - levy_brute(x, float(p), float(t), exact=False)) <= 1e-12


@settings(max_examples=80, deadline=None)
@given(int_vectors, probs, st.fractions(0, 20, max_denominator=4), st.fractions(0, 20, max_denominator=4),
       st.integers(-50, 50), st.integers(1, 5))
def test_levy_invariances(x, p, t1, t2, c, k):
    Z = walk_pmf(x, p, exact=True)
    a, b = sorted((t1, t2))
    assert levy(Z, a) <= levy(Z, b)
    assert levy(Z.shift(c), a) == levy(Z, a)
    assert levy(Z.negate(), a) == levy(Z, a)
    assert levy(Z.scale(k), k * a) == levy(Z, a)


def test_shifted_small_ball():
    y = [0.5, -1.25, 3.0]
    assert shifted_small_ball(y, 100, 0.5, 1) == 0
    assert shifted_small_ball([0, 0, 0], 0, 0.5, 0) == 1
    est, lo, hi = shifted_small_ball([1, 1] + [0] * 28, 1, 0.5, 0, trials=40_000, seed=3, return_ci=True)
    assert lo <= 0.5 <= hi
    rng = generator(RngSeed(4, ("ssb",)))
    for _ in range(100):
        n = int(rng.integers(1, 11))
        y = rng.uniform(-5, 5, n)
        lam, t, p = rng.uniform(-5, 5), rng.uniform(0, 3), float(rng.choice([0.2, 0.5, 0.7]))
        val = shifted_small_ball(y, lam, p, t)
        assert val == pytest.approx(levy_brute(y, p, t, lam=lam), abs=1e-12)
        assert val == pytest.approx(small_ball_at(y, p, lam, t), abs=1e-12)


def test_threshold_examples():
    assert threshold([1], 1, HALF) == 1
    assert threshold([1], 4, HALF) == Fraction(1, 8)
    assert threshold([1], ThresholdQuery(4, HALF)) == Fraction(1, 8)
    assert threshold(np.array([1.0]), 4.0, 0.5) == pytest.approx(0.125, abs=1e-15)
    with pytest.raises(ValueError):
        ThresholdQuery(0)


@settings(max_examples=80, deadline=None)
@given(st.lists(st.integers(-6, 6), min_size=1, max_size=6), probs, st.integers(1, 80))
def test_threshold_matches_piecewise_oracle(x, p, L):
    assert threshold(x, L, p) == threshold_oracle(x, L, p)


def test_threshold_monotone_and_floor():
    rng = generator(RngSeed(5, ("threshold",)))
    Ls = np.geomspace(0.5, 5000, 20)
    for _ in range(50):
        x = rng.normal(size=10)
        x /= np.linalg.norm(x)
        Ts = [threshold(x, L, 0.5) for L in Ls]
        assert all(a >= b for a, b in zip(Ts, Ts[1:]))
        assert all(T >= 0.5**10 / L for T, L in zip(Ts, Ls))
        assert all(0 < T <= 1 for T in Ts)


def test_threshold_scaling():
    # L(kZ, kt) = L(Z, t): scaling x by k moves every breakpoint by k
    rng = generator(6)
    for _ in range(20):
        x = [int(v) for v in rng.integers(-4, 5, 5)]
        for L in (3, 17):
            T = threshold(x, L, HALF)
            T2 = threshold([2 * v for v in x], Fraction(L, 2), HALF)
            if T <= Fraction(1, 2):
                assert T2 == 2 * T


def test_anticoncentration_radius_exists():
    rng = generator(RngSeed(7, ("radius",)))
    for n in range(2, 21, 2):
        for p in (0.3, 0.5):
            x = rng.normal(size=n)
            x /= np.linalg.norm(x)
            r = anticoncentration_radius(x, p)
            assert r > 0
            assert levy_brute(x, p, r * (1 - 1e-9)) <= 1 - p + 1e-12
            assert levy_brute(x, p, r * (1 + 1e-9)) > 1 - p
    assert anticoncentration_radius([1, 1, 1], 0.5) == pytest.approx(0.5)


def test_lcd_examples():
    assert lcd([1.0, 0.0], LcdParams(c_prime=0.5, c=1.0)) == pytest.approx(2 / 3, abs=1e-8)
    x = np.ones(4) / 2
    assert lcd(x, LcdParams(c_prime=0.5, c=0.5)) == pytest.approx(4 / 3, abs=1e-8)
    assert lcd(x, LcdParams(c_prime=0.5, c=0.5, lambda_max=1.0)) == math.inf
    with pytest.raises(ValueError):
        lcd([1.0, 1.0])


def test_rogozin():
    assert rogozin_bound([(0, 1)] * 5, 1) == math.inf
    b4, b16 = rogozin_bound([(0.5, 1)] * 4, 1), rogozin_bound([(0.5, 1)] * 16, 1)
    assert b4 / b16 == pytest.approx(2)
    with pytest.raises(ValueError):
        rogozin_bound([(0.5, 2)], 1)


def test_rogozin_admissible_constant():
    # each coin has L(b_i, 1/4) = 1/2
    for n in range(4, 21):
        Z = walk_pmf([1] * n, HALF, exact=True)
        for r in (Fraction(1, 4), Fraction(1, 2), Fraction(1)):
            bound = rogozin_bound([(0.5, 0.25)] * n, float(r), C=1)
            assert float(levy(Z, r)) <= bound


def test_tensorization_examples():
    assert tensorization_bound(2, tau=0.3, eps=1.0, m=10) == pytest.approx(math.e**10)
    assert tensorization_bound(2, tau=0.0, eps=0.5, m=10) == 0
    assert tensorization_bound(1, C=2, K=0.5, eps=0.25, m=3) == pytest.approx(0.25**3)
    with pytest.raises(ValueError):
        tensorization_bound(2, tau=0.3, eps=1.5, m=10)
    with pytest.raises(ValueError):
        tensorization_bound(3)


def test_tensorization_monte_carlo():
    m, trials, eta = 40, 10**5, 1.0
    rng = generator(RngSeed(8, ("tensor",)))
    for tau in (0.3, 0.6, 0.8):
        for eps in (0.1, 0.25, 0.5):
            bound = tensorization_bound(2, tau=tau, eps=eps, m=m)
            small = rng.random((trials, m)) < tau
            big = rng.uniform(1.01, 2.0, (trials, m)) * rng.choice([-1, 1], (trials, m))
            xi = np.where(small, rng.uniform(-eta, eta, (trials, m)), big)
            freq = np.mean(np.linalg.norm(xi, axis=1) <= eta * math.sqrt(eps * m))
            assert freq <= bound


def test_integer_pmf_validation():
    with pytest.raises(ValueError):
        IntegerPMF(np.array([1, 0]), np.array([0.5, 0.5]))
    assert subset_sums([1, 2], HALF, exact=True)[0].tolist() == [0, 1, 2, 3]
