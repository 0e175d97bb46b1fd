"""Reproducible experiments over the matrix models.

Monte Carlo work is split into fixed blocks of trials.  Block ``k`` of an
experiment draws from the stream ``(master, experiment, ..., k)``, blocks may
run in any process, and results are combined in block order.  Estimates
therefore do not depend on the worker count.
"""

from __future__ import annotations

import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from fractions import Fraction

import numpy as np

from . import __version__
from .averaging import theoremB_estimate, theoremB_max_N, theoremB_values
from .concentration import threshold
from .exactlinalg import DegenerateNullspace, det_exact_batch, rank_exact, unit_normal
from .geometry import INCOMP, IncompParams, classify_compressible
from .model import sample_bernoulli_batch, shifted_integer_matrix, to_rational
from .rng import as_seed, generator
from .rounding import BudgetExhausted, hypothesis_slope, randomized_round, verify_rounding
from .stats import Z95, wilson_interval

BLOCK = 4096
MAX_ENUM_BITS = 32


@dataclass
class ExperimentRecord:
    experiment: str
    params: dict
    seed: int
    workers: int
    points: list
    pinned: dict = field(default_factory=dict)
    runtime_sec: float = 0.0
    version: str = __version__
    diagnostics: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, default=_jsonable)

    def points_json(self) -> str:
        return json.dumps(self.points, default=_jsonable)


def _jsonable(v):
    if isinstance(v, Fraction):
        return str(v)
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.floating):
        return float(v)
    if isinstance(v, np.ndarray):
        return v.tolist()
    raise TypeError(f"cannot serialise {type(v)}")


def proportion_point(x, hits: int, trials: int) -> dict:
    lo, hi = wilson_interval(hits, trials)
    return {"x": x, "estimate": hits / trials if trials else 0.0, "ci_low": lo, "ci_high": hi, "count": trials}


def _run_blocks(fn, tasks: list, workers: int) -> list:
    if workers <= 1 or len(tasks) <= 1:
        return [fn(*t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, *zip(*tasks)))


def _blocks(trials: int, block: int = BLOCK):
    return [(k, min(block, trials - k * block)) for k in range((trials + block - 1) // block)]


# exact enumeration


def enum_singularity(n: int, model: str = "bernoulli", p=Fraction(1, 2)) -> Fraction:
    """Exact probability that an ``n x n`` Bernoulli(p) or sign matrix is singular."""
    if n < 1 or n * n > MAX_ENUM_BITS:
        raise ValueError(f"enumeration needs 2^(n^2) <= 2^{MAX_ENUM_BITS}")
    bits = n * n
    singular_by_ones = [0] * (bits + 1)
    chunk = 1 << min(bits, 20)
    for start in range(0, 1 << bits, chunk):
        k = np.arange(start, min(start + chunk, 1 << bits), dtype=np.int64)
        B = ((k[:, None] >> np.arange(bits)) & 1).reshape(-1, n, n)
        M = 2 * B - 1 if model == "sign" else B
        sing = det_exact_batch(M) == 0
        ones = B.reshape(len(k), -1).sum(axis=1)
        for j, c in enumerate(np.bincount(ones[sing], minlength=bits + 1)):
            singular_by_ones[j] += int(c)
    if model == "sign":
        return Fraction(sum(singular_by_ones), 1 << bits)
    if model != "bernoulli":
        raise ValueError(f"unknown model {model!r}")
    p = to_rational(p)
    return sum((c * p**j * (1 - p) ** (bits - j) for j, c in enumerate(singular_by_ones)), Fraction(0))


# Monte Carlo singularity


def _singular_block(n, p, s, master, stream, k, m):
    B = sample_bernoulli_batch(n, p, m, as_seed(master).child(*stream, k))
    M = B if s is None else shifted_integer_matrix(B, s)
    return int(np.count_nonzero(det_exact_batch(M) == 0))


def mc_singularity(n: int, p=Fraction(1, 2), s=None, trials: int = 10_000, seed=0, workers: int = 1) -> ExperimentRecord:
    """Fraction of sampled matrices with zero exact determinant.

    With a shift ``s = r/q`` the integer matrix ``q B + r`` is tested, which is
    singular exactly when ``B + s 1 1^T`` is.
    """
    if trials < 1:
        raise ValueError("trials must be positive")
    t0 = time.perf_counter()
    p = to_rational(p)
    s = None if s is None else to_rational(s)
    stream = ("mc-singularity", n, str(p), str(s))
    tasks = [(n, p, s, as_seed(seed).master, stream, k, m) for k, m in _blocks(trials)]
    hits = sum(_run_blocks(_singular_block, tasks, workers))
    params = {"n": n, "p": str(p), "s": None if s is None else str(s), "trials": trials}
    return ExperimentRecord(
        "mc-singularity", params, as_seed(seed).master, workers,
        [proportion_point({"n": n}, hits, trials)], runtime_sec=time.perf_counter() - t0,
    )


# smallest singular value tail


def _smin_block(n, p, s, grid, master, stream, k, m):
    B = sample_bernoulli_batch(n, p, m, as_seed(master).child(*stream, k))
    M = B.astype(float) + float(s)
    smin = np.linalg.svd(M, compute_uv=False)[:, -1] * math.sqrt(n)
    return [int(np.count_nonzero(smin <= t)) for t in grid]


def smin_tail(n: int, p=Fraction(1, 2), s=Fraction(-1, 2), t_grid=(0.05, 0.1, 0.2, 0.5), trials=2000, seed=0, workers=1):
    """Empirical ``P{s_min(B + s 1 1^T) <= t / sqrt(n)}`` on a grid of ``t``."""
    p, s = to_rational(p), to_rational(s)
    if not -1 <= s <= 0:
        raise ValueError("s must lie in [-1, 0]")
    t0 = time.perf_counter()
    grid = [float(t) for t in t_grid]
    stream = ("smin-tail", n, str(p), str(s))
    tasks = [(n, p, s, grid, as_seed(seed).master, stream, k, m) for k, m in _blocks(trials, 256)]
    counts = np.sum(_run_blocks(_smin_block, tasks, workers), axis=0)
    points = [proportion_point({"t": t}, int(c), trials) for t, c in zip(grid, counts)]
    params = {"n": n, "p": str(p), "s": str(s), "t_grid": grid, "trials": trials}
    return ExperimentRecord("smin-tail", params, as_seed(seed).master, workers, points, runtime_sec=time.perf_counter() - t0)


# thresholds of random normals


def _normal_trial(n, p, s, L, delta, nu, master, stream, i):
    B = sample_bernoulli_batch(n, p, 1, as_seed(master).child(*stream, i))[0]
    M = shifted_integer_matrix(B, s)
    cols = M[:, : n - 1].T
    try:
        normal = unit_normal(cols)
    except DegenerateNullspace:
        return {"degenerate": True, "rank_deficient": rank_exact(cols) < n - 1}
    cls = classify_compressible(normal.coords, IncompParams(delta, nu))
    T = float(threshold(normal.coords, float(L), float(p), exact=False))
    return {"degenerate": False, "rank_deficient": rank_exact(cols) < n - 1, "class": cls, "T": T}


def _quantile_point(x, values: np.ndarray, q: float) -> dict:
    """Sample quantile with a distribution-free order-statistic interval."""
    m = len(values)
    if m == 0:
        return {"x": x, "estimate": None, "ci_low": None, "ci_high": None, "count": 0}
    v = np.sort(values)
    half = Z95 * math.sqrt(m * q * (1 - q))
    lo = max(0, math.floor(m * q - half) - 1)
    hi = min(m - 1, math.ceil(m * q + half))
    return {"x": x, "estimate": float(np.quantile(v, q)), "ci_low": float(v[lo]), "ci_high": float(v[hi]), "count": m}


def normal_threshold(n=16, p=Fraction(1, 2), s=Fraction(-1, 2), L=20.0, trials=200, seed=0, workers=1,
                     delta=0.25, nu=0.25) -> ExperimentRecord:
    """Thresholds of the unit normal to the first ``n - 1`` columns, split by compressibility."""
    if not 2 <= n <= 16:
        raise ValueError("normal thresholds need 2 <= n <= 16")
    p, s = to_rational(p), to_rational(s)
    t0 = time.perf_counter()
    stream = ("normal-threshold", n, str(p), str(s))
    tasks = [(n, p, s, L, delta, nu, as_seed(seed).master, stream, i) for i in range(trials)]
    rows = _run_blocks(_normal_trial, tasks, workers)
    good = [r for r in rows if not r["degenerate"]]
    degenerate = sum(r["degenerate"] for r in rows)
    root = math.sqrt(n)
    points = [proportion_point({"stat": "degenerate"}, degenerate, trials)]
    incomp = sum(r["class"] == INCOMP for r in good)
    points.append(proportion_point({"stat": "incomp"}, incomp, max(len(good), 1)))
    for cls in ("Comp", "Incomp"):
        vals = np.array([r["T"] * root for r in good if r["class"] == cls])
        for q in (0.1, 0.5, 0.9):
            points.append(_quantile_point({"class": cls, "quantile": q}, vals, q))
    T_all = [r["T"] for r in good]
    diagnostics = {
        "degenerate": degenerate,
        "rank_deficient": sum(r["rank_deficient"] for r in rows),
        "min_T": min(T_all) if T_all else None,
        "lower_bound": float((1 - p) ** n) / L,
        "T_values": T_all,
        "classes": [r["class"] for r in good],
    }
    params = {"n": n, "p": str(p), "s": str(s), "L": L, "delta": delta, "nu": nu, "trials": trials}
    return ExperimentRecord("normal-threshold", params, as_seed(seed).master, workers, points,
                            runtime_sec=time.perf_counter() - t0, diagnostics=diagnostics)


# Theorem-B sweep

DEFAULT_LB_GRID = [0.0] + [2.0 ** (k / 2) for k in range(0, 13)]


def _theoremB_block(n, delta, p, eps, N, master, k, m):
    return theoremB_values(n, delta, p, eps, N, m, as_seed(master).child("theorem-b-sweep", k), block=m)


def theoremB_sweep(n_list=(10, 12, 14), delta=Fraction(1, 4), p=Fraction(1, 2), eps=0.1, L_grid=None,
                   trials=2000, seed=0, workers=1) -> ExperimentRecord:
    """Exceedance curves ``P{L_b > L_B / N}`` with ``N = floor((1 - p + eps)^-n)``."""
    L_grid = DEFAULT_LB_GRID if L_grid is None else [float(v) for v in L_grid]
    t0 = time.perf_counter()
    points, curves = [], {}
    for n in n_list:
        N = theoremB_max_N(n, float(p), eps)
        tasks = [(n, delta, p, eps, N, as_seed(seed).master, (n, k), m)
                 for k, m in _blocks(trials, 250)]
        values = np.concatenate(_run_blocks(_theoremB_block, tasks, workers))
        curve = theoremB_estimate(values, N, L_grid, n)
        if any(a < b for a, b in zip(curve.counts, curve.counts[1:])):
            raise AssertionError("exceedance curve is not monotone in L_B")
        curves[n] = curve
        for L, c in zip(L_grid, curve.counts):
            points.append(proportion_point({"n": n, "L_B": L}, c, trials))
    params = {"n_list": list(n_list), "delta": str(to_rational(delta)), "p": str(to_rational(p)), "eps": eps,
              "L_grid": L_grid, "trials": trials}
    diagnostics = {"N": {str(n): c.N for n, c in curves.items()}}
    return ExperimentRecord("theorem-b", params, as_seed(seed).master, workers, points,
                            runtime_sec=time.perf_counter() - t0, diagnostics=diagnostics)


# rounding suite


def _rounding_instance(n, p, master, i):
    y = generator(as_seed(master).child("rounding-suite", "y", i)).uniform(-50, 50, n)
    lam = float(p) * float(y.sum())
    L = hypothesis_slope(y, lam, float(p))
    try:
        cert = randomized_round(y, lam, float(p), L, seed=as_seed(master).child("rounding-suite", "round", i))
    except BudgetExhausted as e:
        return {"ok": False, "attempts": e.attempts, "verified": False}
    verify_rounding(cert)
    return {
        "ok": True,
        "attempts": cert.attempts,
        "verified": True,
        "certificate": {
            "y": cert.y.tolist(), "y_prime": cert.y_prime.tolist(), "lam": lam, "L": L,
            "checks": cert.checks,
        },
    }


def rounding_suite(count=300, n=12, p=Fraction(1, 2), seed=0, workers=1) -> ExperimentRecord:
    """Certified roundings of random vectors whose slope hypothesis holds with the tightest ``L``."""
    if n > 25:
        raise ValueError("rounding suite needs n <= 25")
    t0 = time.perf_counter()
    rows = _run_blocks(_rounding_instance, [(n, p, as_seed(seed).master, i) for i in range(count)], workers)
    ok = sum(r["ok"] for r in rows)
    attempts = [r["attempts"] for r in rows if r["ok"]]
    hist = {str(k): int(v) for k, v in zip(*np.unique(attempts, return_counts=True))} if attempts else {}
    points = [proportion_point({"stat": "success"}, ok, count)]
    params = {"count": count, "n": n, "p": str(to_rational(p))}
    diagnostics = {
        "attempt_histogram": hist,
        "median_attempts": float(np.median(attempts)) if attempts else None,
        "verified": sum(r["verified"] for r in rows),
        "certificates": [r["certificate"] for r in rows if r["ok"]],
    }
    return ExperimentRecord("rounding-suite", params, as_seed(seed).master, workers, points,
                            runtime_sec=time.perf_counter() - t0, diagnostics=diagnostics)


def enum_record(n: int, model: str, p=Fraction(1, 2)) -> ExperimentRecord:
    t0 = time.perf_counter()
    val = enum_singularity(n, model, p)
    point = {"x": {"n": n, "model": model}, "estimate": float(val), "ci_low": float(val), "ci_high": float(val),
             "count": 1 << (n * n)}
    params = {"n": n, "model": model, "p": str(to_rational(p))}
    return ExperimentRecord("enum-singularity", params, 0, 1, [point], runtime_sec=time.perf_counter() - t0,
                            diagnostics={"exact": str(val)})


def csv_rows(record: ExperimentRecord) -> list[list]:
    """One row per point: experiment, parameter names, parameter values, estimate, CI, count."""
    rows = []
    for pt in record.points:
        x = pt["x"]
        if isinstance(x, dict):
            key = ";".join(str(k) for k in x)
            val = ";".join(str(v) for v in x.values())
        else:
            key, val = "x", str(x)
        rows.append([record.experiment, key, val, pt["estimate"], pt["ci_low"], pt["ci_high"], pt["count"]])
    return rows


CSV_HEADER = ["experiment", "param_key", "param_value", "estimate", "ci_low", "ci_high", "count"]
