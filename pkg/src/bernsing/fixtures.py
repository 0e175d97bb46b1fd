"""Pilot runs that calibrate the Monte Carlo acceptance thresholds.

A pilot uses ten times the test budget and a master seed the tests never
use.  Its output is frozen in ``data/pinned.json``; tests compare fresh
runs at the normal budget against those numbers.
"""

from __future__ import annotations

import json
import math
from fractions import Fraction
from pathlib import Path

import numpy as np

from .averaging import average_sequence, interval_constant, seed_function
from .exactlinalg import spectral_norm
from .experiments import mc_singularity, normal_threshold, rounding_suite, smin_tail, theoremB_sweep
from .geometry import build_discretization_domain, check_admissible
from .model import sample_bernoulli_batch
from .rng import RngSeed

PINNED_PATH = Path(__file__).with_name("data") / "pinned.json"
PILOT_SEED = 987_654_321
PILOT_FACTOR = 10

# test-scale settings the pinned numbers refer to
SMIN = {"n": 100, "p": Fraction(1, 2), "s": Fraction(-1, 2), "t_grid": (0.05, 0.1, 0.2, 0.5), "trials": 2000}
NORMAL = {"n": 16, "p": Fraction(1, 2), "s": Fraction(-1, 2), "L": 20.0, "trials": 200}
THEOREM_B = {"n_list": (10, 12, 14), "delta": Fraction(1, 4), "p": Fraction(1, 2), "eps": 0.1, "trials": 2000}
ROUNDING = {"count": 300, "n": 12, "p": Fraction(1, 2)}


def load_pinned(path: Path = PINNED_PATH) -> dict:
    if not Path(path).exists():
        return {}
    return json.loads(Path(path).read_text())


def update_pinned(name: str, values: dict, path: Path = PINNED_PATH) -> dict:
    data = load_pinned(path)
    data[name] = values
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")
    return data


def pilot_smin_tail(workers: int = 1) -> dict:
    """Band for ``P(t)/t``: pilot ratios widened by four test-scale standard errors."""
    rec = smin_tail(SMIN["n"], SMIN["p"], SMIN["s"], SMIN["t_grid"], SMIN["trials"] * PILOT_FACTOR, PILOT_SEED, workers)
    lows, highs = [], []
    for pt in rec.points:
        t, P = pt["x"]["t"], pt["estimate"]
        sigma = math.sqrt(P * (1 - P) / SMIN["trials"]) / t
        lows.append(P / t - 4 * sigma)
        highs.append(P / t + 4 * sigma)
    return {"band": [min(lows), max(highs)], "pilot_ratios": [pt["estimate"] / pt["x"]["t"] for pt in rec.points],
            "trials": rec.params["trials"]}


def pilot_normal_threshold(workers: int = 1) -> dict:
    """Cap on the median of ``T sqrt(n)`` over incompressible normals.

    The median of a sample of 200 stays below the population quantile
    ``1/2 + 4 sqrt(1/4 / 200)`` except with probability about ``3e-5``.
    """
    rec = normal_threshold(NORMAL["n"], NORMAL["p"], NORMAL["s"], NORMAL["L"], NORMAL["trials"] * PILOT_FACTOR,
                           PILOT_SEED, workers)
    d = rec.diagnostics
    vals = np.array([T * math.sqrt(NORMAL["n"]) for T, c in zip(d["T_values"], d["classes"]) if c == "Incomp"])
    q = 0.5 + 4 * math.sqrt(0.25 / NORMAL["trials"])
    return {"K": float(np.quantile(vals, q)), "pilot_median": float(np.median(vals)), "quantile": q,
            "draws": len(vals)}


def pilot_theorem_b(workers: int = 1) -> dict:
    """Pick the ``L_B`` that best separates ``n = 10`` from ``n = 14`` and cap the ``n = 14`` exceedance."""
    m = THEOREM_B["trials"]
    rec = theoremB_sweep(THEOREM_B["n_list"], THEOREM_B["delta"], THEOREM_B["p"], THEOREM_B["eps"], None,
                         m * PILOT_FACTOR, PILOT_SEED, workers)
    frac = {}
    for pt in rec.points:
        frac[(pt["x"]["n"], pt["x"]["L_B"])] = pt["estimate"]
    grid = rec.params["L_grid"]
    best, best_z = None, -math.inf
    for L in grid:
        a, b = frac[(10, L)], frac[(14, L)]
        se = math.sqrt((a * (1 - a) + b * (1 - b)) / m)
        if se == 0:
            continue
        z = (a - b) / se
        if z > best_z:
            best, best_z = L, z
    f14 = frac[(14, best)]
    return {
        "L_B_star": best,
        "bound_n14": f14 + 4 * math.sqrt(f14 * (1 - f14) / m),
        "pilot": {str(n): frac[(n, best)] for n in THEOREM_B["n_list"]},
        "separation_z": best_z,
    }


def pilot_rounding(workers: int = 1) -> dict:
    rec = rounding_suite(ROUNDING["count"] * PILOT_FACTOR, ROUNDING["n"], ROUNDING["p"], PILOT_SEED, workers)
    return {"success_rate": rec.points[0]["estimate"], "median_attempts": rec.diagnostics["median_attempts"]}


def pilot_mc_singularity(workers: int = 1) -> dict:
    trials = 100_000 * PILOT_FACTOR
    est = {n: mc_singularity(n, Fraction(1, 2), None, trials, PILOT_SEED, workers).points[0]["estimate"] for n in (8, 12)}
    return {"n8": est[8], "n12": est[12], "trials": trials}


def pilot_spectral_norm() -> dict:
    """Largest ``||B - p 1 1^T|| / sqrt(n)`` over 1000 draws at ``n = 100``, with 5% headroom."""
    n, draws = 100, 1000
    ratios = []
    for k in range(0, draws, 100):
        B = sample_bernoulli_batch(n, Fraction(1, 2), 100, RngSeed(PILOT_SEED, ("spectral", k)))
        ratios.extend(spectral_norm(b - 0.5) / math.sqrt(n) for b in B)
    return {"C": 1.05 * max(ratios), "pilot_max": max(ratios), "draws": draws}


def pilot_interval_mass() -> dict:
    """Largest rescaled ``N``-window mass of the full average at ``n = 14`` over 1000 runs."""
    n, delta, p = 14, 0.25, 0.5
    N = math.floor(0.6 ** (-n))
    A = build_discretization_domain("theorem-b", n, Fraction(1, 4), T_or_N=N)
    f0 = seed_function(n, 200)
    consts = []
    for k in range(1000):
        run = average_sequence(f0, A, p, n, RngSeed(PILOT_SEED, ("interval-mass", k)), snapshot_at=[n])
        consts.append(interval_constant(run.snapshot(n), N, n, delta, p))
    return {"C": 1.05 * max(consts), "pilot_max": max(consts), "runs": 1000}


def pilot_net_domain() -> dict:
    """Volume constant needed by the rounded-normal domain, and where admissibility starts."""
    delta, nu, T = Fraction(1, 4), Fraction(1, 2), Fraction(1, 20)
    grid = [8, 16, 32, 64, 128, 256, 512, 1024, 2048, 4096]
    req = {}
    for n in grid:
        A = build_discretization_domain("section-5", n, delta, nu, T)
        req[n] = check_admissible(A, A.N, n, 1.0, delta).required_K
    K = math.ceil(max(req.values()))
    n0 = None
    for n in grid:
        A = build_discretization_domain("section-5", n, delta, nu, T)
        if check_admissible(A, A.N, n, K, delta).passed:
            n0 = n if n0 is None else n0
        else:
            n0 = None
    return {"delta": "1/4", "nu": "1/2", "T": "1/20", "K": K, "n0": n0, "required_K": {str(k): v for k, v in req.items()}}


PILOTS = {
    "smin_tail": pilot_smin_tail,
    "normal_threshold": pilot_normal_threshold,
    "theorem_b": pilot_theorem_b,
    "rounding_suite": pilot_rounding,
    "mc_singularity": pilot_mc_singularity,
    "spectral_norm": lambda workers=1: pilot_spectral_norm(),
    "interval_mass": lambda workers=1: pilot_interval_mass(),
    "net_domain": lambda workers=1: pilot_net_domain(),
}


def run_pilots(names=None, workers: int = 1, path: Path = PINNED_PATH) -> dict:
    for name in names or PILOTS:
        update_pinned(name, PILOTS[name](workers), path)
    return load_pinned(path)


if __name__ == "__main__":
    import sys

    print(json.dumps(run_pilots(sys.argv[1:] or None), indent=2))
