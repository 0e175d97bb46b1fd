"""Command line entry point: ``bernsing <experiment> [flags]``.

Exit codes: 0 success, 2 invalid parameters, 3 a ``--assert`` check failed.
"""

from __future__ import annotations

import argparse
import csv
import io
import itertools
import math
import sys
from fractions import Fraction
from pathlib import Path

from . import fixtures
from .experiments import (
    CSV_HEADER,
    ExperimentRecord,
    csv_rows,
    enum_record,
    enum_singularity,
    mc_singularity,
    normal_threshold,
    rounding_suite,
    smin_tail,
    theoremB_sweep,
)

EXIT_OK, EXIT_INVALID, EXIT_ASSERT = 0, 2, 3

PILOT_NAMES = {
    "mc-singularity": "mc_singularity",
    "smin-tail": "smin_tail",
    "normal-threshold": "normal_threshold",
    "theorem-b": "theorem_b",
    "rounding-suite": "rounding_suite",
}


class InvalidParameters(ValueError):
    pass


def _rational(text: str) -> Fraction:
    try:
        return Fraction(text)
    except (ValueError, ZeroDivisionError) as e:
        raise argparse.ArgumentTypeError(f"not a rational number: {text}") from e


def _int_list(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v]


def _float_list(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bernsing", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("enum-singularity", "mc-singularity", "smin-tail", "normal-threshold", "theorem-b", "rounding-suite"):
        sp = sub.add_parser(name)
        sp.add_argument("--n", type=str, default=None, help="dimension; comma list for theorem-b")
        sp.add_argument("--p", type=_rational, default=Fraction(1, 2))
        sp.add_argument("--s", type=_rational, default=None)
        sp.add_argument("--delta", type=_rational, default=None)
        sp.add_argument("--nu", type=_rational, default=None)
        sp.add_argument("--eps", type=float, default=0.1)
        sp.add_argument("--L", type=str, default=None, help="slope L; comma list of L_B values for theorem-b")
        sp.add_argument("--trials", type=int, default=None)
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--workers", type=int, default=1)
        sp.add_argument("--out", type=Path, default=None)
        sp.add_argument("--format", choices=("json", "csv"), default="json")
        sp.add_argument("--pilot", action="store_true", help="run the calibration pilot and update pinned values")
        sp.add_argument("--assert", dest="check", action="store_true", help="exit 3 if the acceptance check fails")
        if name == "enum-singularity":
            sp.add_argument("--model", choices=("bernoulli", "sign"), default="bernoulli")
        if name == "smin-tail":
            sp.add_argument("--t-grid", type=_float_list, default=[0.05, 0.1, 0.2, 0.5])
    return parser


def _one_n(args, default: int) -> int:
    if args.n is None:
        return default
    try:
        return int(args.n)
    except ValueError as e:
        raise InvalidParameters(f"--n must be an integer, got {args.n}") from e


def run(args) -> ExperimentRecord:
    cmd = args.command
    if args.trials is not None and args.trials < 1:
        raise InvalidParameters("--trials must be positive")
    if args.workers < 1:
        raise InvalidParameters("--workers must be positive")
    if not 0 <= args.p <= 1:
        raise InvalidParameters("--p must lie in [0, 1]")
    if args.s is not None and not -1 <= args.s <= 0:
        raise InvalidParameters("--s must lie in [-1, 0]")
    if cmd == "enum-singularity":
        n = _one_n(args, 3)
        if n < 1 or n > 4:
            raise InvalidParameters("enumeration supports 1 <= n <= 4")
        return enum_record(n, args.model, args.p)
    if cmd == "mc-singularity":
        n = _one_n(args, 3)
        if n < 1:
            raise InvalidParameters("--n must be positive")
        return mc_singularity(n, args.p, args.s, args.trials or 100_000, args.seed, args.workers)
    if cmd == "smin-tail":
        n = _one_n(args, 100)
        s = Fraction(-1, 2) if args.s is None else args.s
        return smin_tail(n, args.p, s, args.t_grid, args.trials or 2000, args.seed, args.workers)
    if cmd == "normal-threshold":
        n = _one_n(args, 16)
        if not 2 <= n <= 16:
            raise InvalidParameters("normal thresholds need 2 <= n <= 16")
        s = Fraction(-1, 2) if args.s is None else args.s
        L = float(args.L) if args.L else 20.0
        if L <= 0:
            raise InvalidParameters("--L must be positive")
        delta = float(args.delta) if args.delta is not None else 0.25
        nu = float(args.nu) if args.nu is not None else 0.25
        return normal_threshold(n, args.p, s, L, args.trials or 200, args.seed, args.workers, delta, nu)
    if cmd == "theorem-b":
        n_list = _int_list(args.n) if args.n else [10, 12, 14]
        grid = _float_list(args.L) if args.L else None
        delta = args.delta if args.delta is not None else Fraction(1, 4)
        if not 0 < delta <= 1:
            raise InvalidParameters("--delta must lie in (0, 1]")
        trials = args.trials or 2000
        if trials < 100:
            raise InvalidParameters("theorem-b needs at least 100 trials")
        return theoremB_sweep(n_list, delta, args.p, args.eps, grid, trials, args.seed, args.workers)
    if cmd == "rounding-suite":
        n = _one_n(args, 12)
        if not 1 <= n <= 25:
            raise InvalidParameters("rounding suite needs 1 <= n <= 25")
        return rounding_suite(args.trials or 300, n, args.p, args.seed, args.workers)
    raise InvalidParameters(f"unknown command {cmd}")


def check(record: ExperimentRecord, pinned: dict) -> list[str]:
    """Acceptance checks for a record; returns the failures."""
    fails = []
    pts = record.points
    name = record.experiment
    prm = record.params
    if name == "enum-singularity":
        n, model = prm["n"], prm["model"]
        if Fraction(record.diagnostics["exact"]) != naive_enum(n, model, Fraction(prm["p"])):
            fails.append("enumeration disagrees with the naive enumerator")
    elif name == "mc-singularity":
        if prm["n"] <= 4 and prm["s"] is None:
            exact = float(enum_singularity(prm["n"], "bernoulli", Fraction(prm["p"])))
            est, m = pts[0]["estimate"], pts[0]["count"]
            if abs(est - exact) > 4 * math.sqrt(exact * (1 - exact) / m) + 1e-15:
                fails.append(f"estimate {est} is more than 4 sigma from {exact}")
    elif name == "smin-tail":
        est = [pt["estimate"] for pt in pts]
        if any(a > b for a, b in zip(est, est[1:])):
            fails.append("tail is not monotone in t")
        band = pinned.get("smin_tail", {}).get("band")
        if band and prm["n"] == 100 and prm["s"] == "-1/2":
            for pt in pts:
                t = pt["x"]["t"]
                if t <= 0.5 and not band[0] <= pt["estimate"] / t <= band[1]:
                    fails.append(f"P(t)/t at t={t} outside the pinned band")
    elif name == "normal-threshold":
        d = record.diagnostics
        if d["min_T"] is not None and d["min_T"] < d["lower_bound"] * (1 - 1e-12):
            fails.append("a threshold is below (1-p)^n / L")
        K = pinned.get("normal_threshold", {}).get("K")
        med = next(pt for pt in pts if pt["x"] == {"class": "Incomp", "quantile": 0.5})["estimate"]
        if K is not None and prm["n"] == 16 and med is not None and med > K:
            fails.append(f"median T sqrt(n) {med} exceeds pinned K {K}")
    elif name == "theorem-b":
        pin = pinned.get("theorem_b", {})
        by_n = {}
        for pt in pts:
            by_n.setdefault(pt["x"]["n"], []).append(pt)
        for n, curve in by_n.items():
            counts = [pt["estimate"] for pt in curve]
            if any(a < b for a, b in zip(counts, counts[1:])):
                fails.append(f"curve for n={n} is not monotone")
            if curve[0]["x"]["L_B"] == 0 and curve[0]["estimate"] != 1:
                fails.append("fraction at L_B = 0 is not 1")
        star = pin.get("L_B_star")
        if star is not None and 14 in by_n:
            p14 = next(pt for pt in by_n[14] if pt["x"]["L_B"] == star)
            if p14["estimate"] > pin["bound_n14"]:
                fails.append("exceedance at L_B* for n=14 above the pinned bound")
            if 10 in by_n:
                p10 = next(pt for pt in by_n[10] if pt["x"]["L_B"] == star)
                if not p14["ci_high"] < p10["ci_low"]:
                    fails.append("n=14 not separated from n=10 at L_B*")
    elif name == "rounding-suite":
        d = record.diagnostics
        if pts[0]["estimate"] < 0.99:
            fails.append("success rate below 0.99")
        if d["verified"] != round(pts[0]["estimate"] * pts[0]["count"]):
            fails.append("some certificates did not re-verify")
        if d["median_attempts"] is None or d["median_attempts"] > 16:
            fails.append("median attempts above 16")
    return fails


def naive_enum(n: int, model: str, p: Fraction) -> Fraction:
    """Matrix-by-matrix enumeration with Laplace-expansion determinants."""

    def det(m):
        if len(m) == 1:
            return m[0][0]
        return sum((-1) ** j * m[0][j] * det([row[:j] + row[j + 1 :] for row in m[1:]]) for j in range(len(m)))

    total = Fraction(0)
    for bits in itertools.product((0, 1), repeat=n * n):
        rows = [list(bits[i * n : (i + 1) * n]) for i in range(n)]
        if model == "sign":
            rows = [[2 * v - 1 for v in r] for r in rows]
            weight = Fraction(1, 2 ** (n * n))
        else:
            k = sum(bits)
            weight = p**k * (1 - p) ** (n * n - k)
        if det(rows) == 0:
            total += weight
    return total


def emit(record: ExperimentRecord, fmt: str, out: Path | None):
    if fmt == "json":
        text = record.to_json() + "\n"
    else:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        writer.writerows(csv_rows(record))
        text = buf.getvalue()
    if out is None:
        sys.stdout.write(text)
    else:
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_INVALID if e.code else EXIT_OK
    try:
        if args.pilot:
            name = PILOT_NAMES.get(args.command)
            if name is None:
                raise InvalidParameters(f"{args.command} has no pilot")
            values = fixtures.PILOTS[name](args.workers)
            fixtures.update_pinned(name, values)
        record = run(args)
    except (InvalidParameters, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID
    pinned = fixtures.load_pinned()
    record.pinned = pinned.get(PILOT_NAMES.get(args.command, ""), {})
    emit(record, args.format, args.out)
    if args.check:
        fails = check(record, pinned)
        for f in fails:
            print(f"assert failed: {f}", file=sys.stderr)
        if fails:
            return EXIT_ASSERT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
