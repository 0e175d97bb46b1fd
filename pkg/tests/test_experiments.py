import json
import math
from fractions import Fraction

import pytest

from bernsing.exactlinalg import spectral_norm
from bernsing.experiments import (
    CSV_HEADER,
    csv_rows,
    enum_record,
    enum_singularity,
    mc_singularity,
    normal_threshold,
    rounding_suite,
    smin_tail,
    theoremB_sweep,
)
from bernsing.model import sample_bernoulli_batch, shifted_integer_matrix
from bernsing.rng import as_seed
from bernsing.stats import wilson_interval
from oracles import fraction_rank, singular_probability

HALF = Fraction(1, 2)


def test_enum_examples():
    assert enum_singularity(2, "bernoulli", HALF) == Fraction(5, 8)
    assert enum_singularity(2, "sign") == HALF
    for p in (HALF, Fraction(1, 3), Fraction(9, 10)):
        assert enum_singularity(1, "bernoulli", p) == 1 - p
    with pytest.raises(ValueError):
        enum_singularity(6)


def test_enum_matches_oracle_n3():
    for p in (HALF, Fraction(1, 3)):
        assert enum_singularity(3, "bernoulli", p) == singular_probability(3, p)
    assert enum_singularity(3, "sign") == singular_probability(3, HALF, sign=True)


def test_mc_trivial_and_shifted():
    rec = mc_singularity(5, 0, None, 1000, seed=1)
    assert rec.points[0]["estimate"] == 1
    exact = float(enum_singularity(3, "sign"))
    rec = mc_singularity(3, HALF, Fraction(-1, 2), 100_000, seed=2)
    est = rec.points[0]["estimate"]
    assert abs(est - exact) <= 4 * math.sqrt(exact * (1 - exact) / 100_000)


def test_mc_decreases_with_n(pinned):
    a = mc_singularity(8, HALF, None, 100_000, seed=3).points[0]
    b = mc_singularity(12, HALF, None, 100_000, seed=3).points[0]
    assert b["ci_high"] < a["ci_low"]
    pin = pinned["mc_singularity"]
    for pt, ref in ((a, pin["n8"]), (b, pin["n12"])):
        assert abs(pt["estimate"] - ref) <= 4 * math.sqrt(ref * (1 - ref) / 100_000)


def test_smin_tail_examples():
    n = 10
    big = 10 * n * math.sqrt(n)  # ||M|| <= n for entries in [-1, 1]
    rec = smin_tail(n, HALF, Fraction(-1, 2), [0.01, 0.1, 1.0, 3.0, big], 500, seed=4)
    est = [pt["estimate"] for pt in rec.points]
    assert all(a <= b for a, b in zip(est, est[1:]))
    assert est[-1] == 1
    assert all(pt["count"] == 500 for pt in rec.points)
    B = sample_bernoulli_batch(n, HALF, 10, 0)
    assert all(spectral_norm(b - 0.5) <= n for b in B)


def test_normal_threshold_small():
    n, trials, L = 8, 60, 20.0
    rec = normal_threshold(n, HALF, Fraction(-1, 2), L, trials, seed=5)
    d = rec.diagnostics
    assert all(T >= 0.5**n / L * (1 - 1e-12) for T in d["T_values"])
    # rank oracle on the same draws
    stream = ("normal-threshold", n, "1/2", "-1/2")
    deficient = 0
    for i in range(trials):
        B = sample_bernoulli_batch(n, HALF, 1, as_seed(5).child(*stream, i))[0]
        cols = shifted_integer_matrix(B, Fraction(-1, 2))[:, : n - 1].T
        deficient += fraction_rank(cols) < n - 1
    assert d["degenerate"] == deficient == d["rank_deficient"]
    assert len(d["T_values"]) == len(d["classes"]) == trials - deficient


def test_theoremB_sweep_small():
    rec = theoremB_sweep([8, 10], Fraction(1, 4), HALF, 0.1, [0, 1, 4, 16], 200, seed=7)
    for n in (8, 10):
        pts = [pt for pt in rec.points if pt["x"]["n"] == n]
        assert pts[0]["estimate"] == 1
        assert all(a["estimate"] >= b["estimate"] for a, b in zip(pts, pts[1:]))
    assert rec.diagnostics["N"] == {"8": math.floor(0.6**-8), "10": math.floor(0.6**-10)}


def test_rounding_suite_small():
    rec = rounding_suite(20, 8, HALF, seed=8)
    d = rec.diagnostics
    assert rec.points[0]["estimate"] == 1
    assert d["verified"] == 20
    assert d["median_attempts"] <= 16
    assert sum(d["attempt_histogram"].values()) == 20


def test_record_schema():
    rec = mc_singularity(3, HALF, None, 500, seed=9)
    data = json.loads(rec.to_json())
    for key, kind in (("experiment", str), ("params", dict), ("seed", int), ("workers", int), ("points", list),
                      ("pinned", dict), ("runtime_sec", float), ("version", str)):
        assert isinstance(data[key], kind)
    for pt in data["points"]:
        assert set(pt) == {"x", "estimate", "ci_low", "ci_high", "count"}
        assert (pt["ci_low"], pt["ci_high"]) == pytest.approx(wilson_interval(round(pt["estimate"] * 500), 500))
    assert data["params"]["trials"] == 500


def test_csv_rows():
    rec = enum_record(2, "sign")
    assert CSV_HEADER[:3] == ["experiment", "param_key", "param_value"]
    assert CSV_HEADER[-4:] == ["estimate", "ci_low", "ci_high", "count"]
    assert csv_rows(rec) == [["enum-singularity", "n;model", "2;sign", 0.5, 0.5, 0.5, 16]]


def test_worker_independence_small():
    a = mc_singularity(4, HALF, None, 9000, seed=10, workers=1)
    b = mc_singularity(4, HALF, None, 9000, seed=10, workers=2)
    assert a.points_json() == b.points_json()
