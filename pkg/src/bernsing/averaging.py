"""Random averaging of functions on Z along Bernoulli-weighted steps.

A function on the integers is kept as a dense array over a finite window.
One averaging step maps ``f`` to ``(1 - p) f(t) + p f(t + X)``; iterating
with ``X_i`` uniform on the coordinate sets of a product domain gives the
random function whose sup norm the experiments study.  Points outside the
window count as zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .concentration import dense_walk
from .geometry import AdmissibleSet, build_discretization_domain
from .model import to_rational
from .rng import as_seed, generator
from .stats import wilson_interval

LOG_FLOOR = 1e-300


class WindowBudgetExceeded(RuntimeError):
    pass


class HypothesisNotMet(ValueError):
    pass


@dataclass(frozen=True)
class WindowedFunction:
    """Nonnegative function supported on ``offset .. offset + len(values) - 1``."""

    offset: int
    values: np.ndarray
    truncation_loss: float = 0.0

    def __post_init__(self):
        if np.any(self.values < 0):
            raise ValueError("values must be nonnegative")

    @property
    def mass(self):
        return self.values.sum()

    @property
    def stop(self) -> int:
        return self.offset + len(self.values)

    def support(self) -> np.ndarray:
        return np.arange(self.offset, self.stop)

    def __call__(self, t):
        t = np.asarray(t)
        idx = t - self.offset
        inside = (idx >= 0) & (idx < len(self.values))
        out = np.where(inside, self.values[np.clip(idx, 0, len(self.values) - 1)], 0)
        return out if out.ndim else out[()]

    def on(self, lo: int, hi: int) -> np.ndarray:
        """Values on ``lo..hi`` inclusive, zero outside the window."""
        out = np.zeros(hi - lo + 1, dtype=self.values.dtype)
        a, b = max(lo, self.offset), min(hi, self.stop - 1)
        if a <= b:
            out[a - lo : b - lo + 1] = self.values[a - self.offset : b - self.offset + 1]
        return out

    def sup(self):
        return self.values.max()

    def argmax(self) -> int:
        return self.offset + int(np.argmax(self.values))


@dataclass
class AveragingRun:
    A: AdmissibleSet | None
    p: float
    X: np.ndarray
    snapshots: dict
    R: float | None = None
    decay_log: list = field(default_factory=list)

    @property
    def length(self) -> int:
        return len(self.X)

    def snapshot(self, i: int) -> WindowedFunction:
        if i not in self.snapshots:
            raise KeyError(f"no snapshot at step {i}")
        return self.snapshots[i]


def point_mass(t: int = 0, exact: bool = False) -> WindowedFunction:
    return WindowedFunction(t, np.array([to_rational(1) if exact else 1.0], dtype=object if exact else float))


def seed_function(n: int, half_width: int) -> WindowedFunction:
    """``2^{-|t|/sqrt(n)} / m0`` on ``[-half_width, half_width]``, ``m0`` the full sum over Z."""
    if half_width < 40 * math.sqrt(n):
        raise ValueError("half_width must be at least 40 sqrt(n)")
    r = 2.0 ** (-1 / math.sqrt(n))
    m0 = 1 + 2 * r / (1 - r)
    t = np.arange(-half_width, half_width + 1)
    values = r ** np.abs(t) / m0
    lost = 2 * r ** (half_width + 1) / (1 - r) / m0
    return WindowedFunction(-half_width, values, lost)


def log2_lipschitz_constant(f: WindowedFunction, lo: int | None = None, hi: int | None = None) -> float:
    """Largest ``|log2 f(t) - log2 f(t+1)|`` over adjacent points of the window (or ``lo..hi``)."""
    lo = f.offset if lo is None else lo
    hi = f.stop - 1 if hi is None else hi
    vals = np.asarray(f.on(lo, hi), dtype=float)
    if np.any(vals == 0):
        raise ValueError("function vanishes inside the window")
    if len(vals) < 2:
        return 0.0
    logs = np.log2(np.maximum(vals, LOG_FLOOR))
    return float(np.abs(np.diff(logs)).max())


def _keep_heaviest(offset: int, values: np.ndarray, budget: int):
    cum = np.concatenate(([0], np.cumsum(values)))
    masses = cum[budget:] - cum[:-budget]
    start = int(np.argmax(masses))
    lost = values.sum() - masses[start]
    return offset + start, values[start : start + budget].copy(), lost


def average_step(f: WindowedFunction, X: int, p, budget: int | None = None) -> WindowedFunction:
    """``(1 - p) f(t) + p f(t + X)`` on a window wide enough for both terms.

    With a ``budget`` the window is cut back to the heaviest ``budget``
    consecutive points and the discarded mass goes to ``truncation_loss``.
    """
    X = int(X)
    if X == 0:
        return f
    w = len(f.values)
    lo = min(f.offset, f.offset - X)
    values = np.zeros(w + abs(X), dtype=f.values.dtype)
    a = f.offset - lo
    values[a : a + w] += (1 - p) * f.values
    values[a - X : a - X + w] += p * f.values
    loss = f.truncation_loss
    if budget is not None and len(values) > budget:
        if budget < 1:
            raise WindowBudgetExceeded("window budget must be positive")
        lo, values, cut = _keep_heaviest(lo, values, budget)
        loss = loss + float(cut)
    return WindowedFunction(lo, values, loss)


def fold_averages(f0: WindowedFunction, xs, p, budget: int | None = None) -> list[WindowedFunction]:
    """All intermediate averages ``f_0, f_1, ..., f_l`` for the steps ``xs``."""
    if isinstance(p, float) or f0.values.dtype != object:
        p = float(p)
    else:
        p = to_rational(p)
    out = [f0]
    for x in xs:
        out.append(average_step(out[-1], int(x), p, budget))
    return out


def average_sequence(
    f0: WindowedFunction,
    A: AdmissibleSet,
    p,
    ell: int,
    seed,
    snapshot_at=None,
    budget: int | None = None,
) -> AveragingRun:
    """Draw ``X_i`` uniform on ``A_i`` for ``i <= ell`` and fold the averaging steps."""
    if not 0 <= ell <= A.n:
        raise ValueError("ell must lie in [0, n]")
    rng = generator(seed)
    X = np.array([int(A.coordinate_sets[i].sample(rng)) for i in range(ell)], dtype=np.int64)
    fs = fold_averages(f0, X, p, budget)
    keep = range(ell + 1) if snapshot_at is None else sorted(set(snapshot_at))
    return AveragingRun(A=A, p=p, X=X, snapshots={i: fs[i] for i in keep})


def interval_mass(f: WindowedFunction, lo: int, hi: int):
    """Mass of ``f`` on the integer interval ``lo..hi``."""
    if hi < lo:
        return 0.0
    return f.on(lo, hi).sum()


def max_window_mass(f: WindowedFunction, N: int):
    """Largest mass over integer intervals of length ``N``, with its left end."""
    vals = f.values
    if N >= len(vals):
        return vals.sum(), f.offset
    cum = np.concatenate(([0], np.cumsum(vals)))
    masses = cum[N:] - cum[:-N]
    k = int(np.argmax(masses))
    return masses[k], f.offset + k


def interval_constant(f: WindowedFunction, N: int, n: int, delta0: float, p: float) -> float:
    """Largest ``N``-window mass rescaled by ``sqrt(delta0 n min(p, 1 - p))``."""
    mass, _ = max_window_mass(f, N)
    return float(mass) * math.sqrt(delta0 * n * min(p, 1 - p))


@dataclass(frozen=True)
class DescendantSequence:
    t: list
    decayed: list
    level: float


def descend_and_decay(run: AveragingRun, R: float, t_start: int, v) -> DescendantSequence:
    """Descendant sequence ``t_i = t - sum_{j <= i} v_j X_j`` and decay flags.

    Step ``m`` is flagged when ``t_{m-1}`` decays at time ``m``: both
    ``f_{m-1}(t_{m-1} + X_m)`` and ``f_{m-1}(t_{m-1} - X_m)`` are at most
    ``R / (N sqrt(n))``.
    """
    v = [int(b) for b in v]
    if len(v) != run.length:
        raise ValueError("need one bit per step")
    if run.A is None:
        raise ValueError("run carries no domain")
    level = R / (run.A.N * math.sqrt(run.A.n))
    ts, flags = [int(t_start)], []
    for m in range(1, run.length + 1):
        f = run.snapshot(m - 1)
        Xm = int(run.X[m - 1])
        t = ts[-1]
        flags.append(bool(f(t + Xm) <= level and f(t - Xm) <= level))
        ts.append(t - v[m - 1] * Xm)
    run.R = R
    run.decay_log = [(ts[m - 1], m, flags[m - 1]) for m in range(1, run.length + 1)]
    return DescendantSequence(ts, flags, level)


def greedy_spike_chain(run: AveragingRun, rtol: float = 1e-12):
    """Backward chain from the argmax of the last average.

    ``t_l`` is the lowest maximiser; then ``t_{i-1} = t_i + v_i X_i`` with
    ``v_i`` maximising ``f_{i-1}(t_i + v_i X_i)`` (0 wins ties).  The values
    ``f_i(t_i)`` are nondecreasing as ``i`` goes down, which is asserted.
    """
    ell = run.length
    t = run.snapshot(ell).argmax()
    ts, vs = [t], []
    for i in range(ell, 0, -1):
        f = run.snapshot(i - 1)
        Xi = int(run.X[i - 1])
        stay, move = f(t), f(t + Xi)
        v = 1 if move > stay else 0
        nxt = t + v * Xi
        cur_val = run.snapshot(i)(t)
        assert f(nxt) >= cur_val * (1 - rtol), "chain lost monotonicity"
        vs.append(v)
        ts.append(nxt)
        t = nxt
    return ts[::-1], vs[::-1]


def _aligned(f, g):
    if isinstance(f, WindowedFunction) and isinstance(g, WindowedFunction):
        lo, hi = min(f.offset, g.offset), max(f.stop, g.stop) - 1
        return f.on(lo, hi), g.on(lo, hi)
    f, g = np.asarray(f), np.asarray(g)
    if f.shape != g.shape:
        raise ValueError("arrays must be aligned")
    return f, g


def ell2_mix_identity(f, g, p):
    """``(||p f + (1-p) g||^2, p ||f||^2 + (1-p) ||g||^2, p (1-p) ||f - g||^2)``.

    The first equals the second minus the third.
    """
    f, g = _aligned(f, g)
    lhs = np.sum((p * f + (1 - p) * g) ** 2)
    rhs = p * np.sum(f * f) + (1 - p) * np.sum(g * g)
    drop = p * (1 - p) * np.sum((f - g) ** 2)
    return lhs, rhs, drop


@dataclass(frozen=True)
class SpikeIntervals:
    level: float
    upper: float
    delta: float
    intervals: list
    bin_index: int
    bin_counts: list


def _spike_hypotheses(g1: WindowedFunction, N, mu, R, I0, lipschitz):
    lo, hi = I0, I0 + 2 * N - 1
    if lo < g1.offset or hi >= g1.stop:
        raise HypothesisNotMet("the doubled interval must lie inside the window")
    lip = log2_lipschitz_constant(g1)
    if lip > lipschitz:
        raise HypothesisNotMet(f"log2 g1 is {lip:.3g}-Lipschitz, need {lipschitz:.3g}")
    heaviest, _ = max_window_mass(g1, N)
    if heaviest > R * N * (1 + 1e-12):
        raise HypothesisNotMet("an interval of length N carries more than R N")
    spikes = int(np.count_nonzero(g1.on(I0, I0 + N - 1) >= 8 * R))
    if spikes < mu * N:
        raise HypothesisNotMet(f"only {spikes} points of I0 reach 8R, need {mu * N}")


def spike_intervals(
    g1: WindowedFunction,
    N: int,
    mu: float,
    R: float,
    I0: int,
    lipschitz: float | None = None,
    check_hypotheses: bool = True,
) -> SpikeIntervals:
    """Cover the high points of ``g1`` on ``I0 = I0..I0+N-1`` by short intervals.

    First a level ``a`` in ``[4R, 8R 2^{-mu^2}]`` is picked so that few points of
    ``I0 + {0..N}`` take values in ``(a, 2^{mu^2} a]``.  Then intervals are grown
    left to right: each starts at the next point with ``g1 >= 2^{mu^2} a`` and
    extends as far as possible while at most a ``delta = 8 mu`` fraction of
    its points have ``g1 <= a``.

    ``lipschitz`` defaults to ``mu**4``; any value with
    ``floor(mu^2 / lipschitz) > 1 / (4 mu)`` keeps the length guarantees.
    """
    if not 0 < mu <= 1 / 16:
        raise ValueError("mu must lie in (0, 1/16]")
    lipschitz = mu**4 if lipschitz is None else lipschitz
    if math.floor(mu * mu / lipschitz) <= 1 / (4 * mu):
        raise ValueError("lipschitz too large for this mu")
    if check_hypotheses:
        _spike_hypotheses(g1, N, mu, R, I0, lipschitz)
    vals = np.asarray(g1.on(I0, I0 + 2 * N - 1), dtype=float)
    i0_end = N - 1  # last index of I0 inside the doubled interval
    step = 2.0 ** (mu * mu)
    levels = 4 * R * 2.0 ** (mu * mu * np.arange(math.floor(1 / (mu * mu))))
    counts = [int(np.count_nonzero((vals > a) & (vals <= a * step))) for a in levels]
    k = int(np.argmin(counts))
    a = float(levels[k])
    upper = a * step
    delta = 8 * mu
    high = np.nonzero(vals >= upper)[0]
    small = np.concatenate(([0], np.cumsum(vals <= a)))
    intervals = []
    pos = 0
    while True:
        j = np.searchsorted(high, pos)
        if j == len(high) or high[j] > i0_end:
            break
        left = int(high[j])
        ends = np.arange(left, len(vals))
        ok = (small[ends + 1] - small[left]) <= delta * (ends - left + 1)
        right = int(ends[np.nonzero(ok)[0][-1]])
        intervals.append((I0 + left, I0 + right))
        if right >= i0_end:
            break
        pos = right + 1
    return SpikeIntervals(a, upper, delta, intervals, k, counts)


def spike_properties(g1: WindowedFunction, N: int, mu: float, I0: int, result: SpikeIntervals, lipschitz=None) -> dict:
    """Check the four guarantees of :func:`spike_intervals` on its output."""
    lipschitz = mu**4 if lipschitz is None else lipschitz
    spikes = set((I0 + np.nonzero(g1.on(I0, I0 + N - 1) >= result.upper)[0]).tolist())
    covered = set()
    for lo, hi in result.intervals:
        covered.update(range(lo, hi + 1))
    lengths = [hi - lo + 1 for lo, hi in result.intervals]
    lows = [int(np.count_nonzero(g1.on(lo, hi) <= result.level)) for lo, hi in result.intervals]
    return {
        "a": all(I0 <= lo < I0 + N for lo, _ in result.intervals) and spikes <= covered,
        "b": all(m <= N for m in lengths),
        "c": all(m > 1 / (4 * mu) and m >= math.floor(mu * mu / lipschitz) for m in lengths),
        "d": all(c >= result.delta * m / 2 for c, m in zip(lows, lengths)),
    }


@dataclass(frozen=True)
class SpikeCount:
    pre: int
    post: int
    bound: float


def _max_count(mask: np.ndarray, N: int) -> int:
    if len(mask) <= N:
        return int(mask.sum())
    cum = np.concatenate(([0], np.cumsum(mask)))
    return int((cum[N:] - cum[:-N]).max())


def spike_count_growth(f: WindowedFunction, xs, p, H: float, N: int) -> SpikeCount:
    """Spike counts per length-``N`` interval before and after averaging over ``xs``.

    Before: points with ``f >= H``.  After: points with ``E_b f(t + sum b_i x_i) >= sqrt(2) H``.
    The second never exceeds the first divided by ``sqrt(2) - 1``.
    """
    if f.sup() > 2 * H:
        raise ValueError("need sup f <= 2H")
    pre = _max_count(f.values >= H, N)
    g = fold_averages(f, xs, float(p))[-1]
    post = _max_count(g.values >= math.sqrt(2) * H, N)
    bound = pre / (math.sqrt(2) - 1)
    assert post <= bound + 1e-9, "spike count grew beyond the bound"
    return SpikeCount(pre, post, bound)


def theoremB_max_N(n: int, p: float, eps: float) -> int:
    return math.floor((1 - p + eps) ** (-n))


def small_ball_sqrt_n(xi, p, n: int | None = None) -> float:
    """Concentration of ``sum b_i xi_i`` at radius ``sqrt(n)`` for integer ``xi``.

    A closed window of length ``2 sqrt(n)`` holds ``floor(2 sqrt(n)) + 1`` consecutive integers.
    """
    n = len(xi) if n is None else n
    _, dense = dense_walk(xi, p)
    k = math.isqrt(4 * n) + 1
    cum = np.concatenate(([0.0], np.cumsum(dense)))
    if k >= len(dense):
        return float(cum[-1])
    return float((cum[k:] - cum[:-k]).max())


def theoremB_trial(n: int, delta, p, eps: float, N: int, seed, budget: int = 50_000_000) -> float:
    """Draw one point uniform on the theorem-b domain and return its small-ball value at ``sqrt(n)``."""
    if N > theoremB_max_N(n, float(p), eps):
        raise ValueError("N exceeds (1 - p + eps)^(-n)")
    A = build_discretization_domain("theorem-b", n, delta, T_or_N=N)
    if 2 * N * n + 1 > budget:
        raise WindowBudgetExceeded("law support exceeds the budget")
    xi = A.sample(generator(seed))
    return small_ball_sqrt_n(xi, float(p), n)


def theoremB_values(n, delta, p, eps, N, trials: int, seed, block: int = 256) -> np.ndarray:
    """Small-ball values for ``trials`` independent points, drawn in fixed blocks."""
    if N > theoremB_max_N(n, float(p), eps):
        raise ValueError("N exceeds (1 - p + eps)^(-n)")
    A = build_discretization_domain("theorem-b", n, delta, T_or_N=N)
    base = as_seed(seed)
    out = np.empty(trials)
    for b0 in range(0, trials, block):
        m = min(block, trials - b0)
        pts = A.sample(generator(base.child("theorem-b", n, b0 // block)), m)
        for j in range(m):
            out[b0 + j] = small_ball_sqrt_n(pts[j], float(p), n)
    return out


@dataclass(frozen=True)
class ExceedanceCurve:
    n: int
    N: int
    L_grid: list
    counts: list
    trials: int

    @property
    def fractions(self) -> list:
        return [c / self.trials for c in self.counts]

    def cis(self) -> list:
        return [wilson_interval(c, self.trials) for c in self.counts]


def theoremB_estimate(values, N: int, L_grid, n: int = 0) -> ExceedanceCurve:
    """Fraction of trials whose value exceeds ``L_B / N`` for each ``L_B`` in the grid."""
    values = np.asarray(values)
    if len(values) < 100:
        raise ValueError("need at least 100 trials")
    counts = [int(np.count_nonzero(values > L / N)) for L in L_grid]
    return ExceedanceCurve(n, N, list(L_grid), counts, len(values))
