"""Command-line front end.

Exit codes: 0 completed, 2 certificate found, 3 feasible point found, 1 error.
"""

from __future__ import annotations

import argparse
import csv
import io
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .certificate import TChoice
from .exclusion import (
    BoxMeasure,
    Excluded,
    FeasibleFound,
    FindOptions,
    box_measure,
    enlarge_exclusion_box,
    find_exclusion_box,
    prune,
    split_complement,
)
from .interval import BoxVec
from .model import eval_F, is_feasible, load_problem, random_csp
from .solver import rp_cost
from .startpoint import initial_y

EXIT_OK, EXIT_ERROR, EXIT_CERTIFIED, EXIT_FEASIBLE = 0, 1, 2, 3

PRUNE_TAIL = ["status", "fValue", "iterations", "nCalls", "cost", "wallMillis"]
BENCH_COLUMNS = ["problem", "statusA", "fA", "nCallsA", "costA",
                 "statusB", "fB", "nCallsB", "costB", "rp"]


class CliError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(message)


def num(x) -> str:
    """Number with 12 significant digits; negative zero prints as 0."""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if x == 0:
        x = 0.0
    return f"{x:.12g}"


def fmt_box(lo, hi) -> str:
    return "x".join(f"[{num(a)},{num(b)}]" for a, b in zip(lo, hi))


def fmt_point(x) -> str:
    return "(" + ",".join(num(a) for a in x) + ")"


def emit_report(rows, n: Optional[int] = None) -> str:
    """CSV text for prune rows, one line per processed box."""
    if n is None:
        n = len(rows[0].lo) if rows else 0
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["boxId", "parentId"] + [f"lo{i + 1}" for i in range(n)]
               + [f"hi{i + 1}" for i in range(n)] + PRUNE_TAIL)
    for r in rows:
        w.writerow([r.box_id, r.parent_id] + [num(a) for a in r.lo] + [num(b) for b in r.hi]
                   + [r.status, num(r.f_value), r.iterations, r.n_calls, num(r.cost), num(r.wall_ms)])
    return out.getvalue()


def emit_bench(rows) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(BENCH_COLUMNS)
    for r in rows:
        w.writerow([r[k] if isinstance(r[k], str) else num(r[k]) for k in BENCH_COLUMNS])
    return out.getvalue()


def resolve_problem(path: str) -> Path:
    p = Path(path)
    if p.exists():
        return p
    q = p.with_name(p.name + ".json")
    if q.exists():
        return q
    raise CliError(f"problem file not found: {path}")


def parse_box(text: str) -> BoxVec:
    """``"0:3,1:2"`` -> ``[0,3]x[1,2]``."""
    try:
        parts = [tuple(float(t) for t in comp.split(":")) for comp in text.split(",")]
        lo, hi = zip(*parts)
    except ValueError as exc:
        raise CliError(f"bad box {text!r}: expected lo:hi,lo:hi,...") from exc
    return BoxVec.from_bounds(lo, hi)


def _find_opts(args) -> FindOptions:
    return FindOptions(max_iter=args.max_iter, tol=args.tol, early_exit=args.early_exit,
                       optimize_w=args.optimize_w, w_start=args.w_start,
                       strict_interior=args.strict)


def _find(csp, args, choice):
    fixed = not args.variable_box
    r = None if fixed else args.r_fraction * (csp.x_hi - csp.x_lo)
    return find_exclusion_box(csp, None, r, choice, fixed_box=fixed, opts=_find_opts(args))


def _outcome_line(out) -> tuple[str, int]:
    if isinstance(out, Excluded):
        c = out.certificate
        return f"EXCLUDED f={c.f_value:.6f} box={fmt_box(c.u, c.v)}", EXIT_CERTIFIED
    if isinstance(out, FeasibleFound):
        return f"FEASIBLE point={fmt_point(out.point)}", EXIT_FEASIBLE
    rep = out.report
    return (f"UNKNOWN best={num(rep.best_value)} status={rep.status.value} "
            f"iterations={rep.iterations}", EXIT_OK)


def cmd_check(args, out) -> int:
    csp = load_problem(resolve_problem(args.problem))
    z = 0.5 * (csp.x_lo + csp.x_hi)
    if is_feasible(csp, z):
        print(f"FEASIBLE point={fmt_point(z)}", file=out)
        return EXIT_FEASIBLE
    Fz = eval_F(csp, z)
    print(f"midpoint {fmt_point(z)} infeasible", file=out)
    print(f"F(z)={fmt_point(Fz)}", file=out)
    print(f"y0={fmt_point(initial_y(Fz, csp.F_lo, csp.F_hi))}", file=out)
    return EXIT_OK


def cmd_find(args, out) -> int:
    csp = load_problem(resolve_problem(args.problem))
    res = _find(csp, args, TChoice.parse(args.t))
    line, code = _outcome_line(res)
    print(line, file=out)
    return code


def cmd_enlarge(args, out) -> int:
    csp = load_problem(resolve_problem(args.problem))
    res = _find(csp, args, TChoice.parse(args.t))
    line, code = _outcome_line(res)
    print(line, file=out)
    if not isinstance(res, Excluded):
        return code
    cert = res.certificate
    measure = BoxMeasure(args.measure)
    big = enlarge_exclusion_box(csp, cert, args.delta, measure, _find_opts(args))
    lo, hi = csp.x_lo, csp.x_hi
    print(f"before box={fmt_box(cert.u, cert.v)} f={cert.f_value:.6f} "
          f"measure={num(box_measure(measure, cert.u, cert.v, lo, hi))}", file=out)
    print(f"after  box={fmt_box(big.u, big.v)} f={big.f_value:.6f} "
          f"measure={num(box_measure(measure, big.u, big.v, lo, hi))}", file=out)
    return EXIT_CERTIFIED


def cmd_split(args, out) -> int:
    outer, inner = parse_box(args.outer), parse_box(args.inner)
    if len(outer) != len(inner):
        raise CliError("outer and inner boxes differ in dimension")
    try:
        pieces = split_complement(outer, inner)
    except ValueError as exc:
        raise CliError(str(exc)) from exc
    for b in pieces:
        print(fmt_box(b.lo, b.hi), file=out)
    return EXIT_OK


def _write(text: str, path: Optional[str], out) -> None:
    if path:
        Path(path).write_text(text)
    else:
        out.write(text)


def cmd_prune(args, out) -> int:
    csp = load_problem(resolve_problem(args.problem))
    res = prune(csp, max_boxes=args.max_boxes, max_iter_per_box=args.max_iter,
                r_fraction=args.r_fraction, choice=TChoice.parse(args.t),
                enlarge=not args.no_enlarge, timing=args.timing)
    _write(emit_report(res.rows, csp.n), args.report, out)
    if args.report:
        vol_ex = sum(float(np.prod(c.v - c.u)) for c in res.excluded)
        print(f"excluded={len(res.excluded)} remaining={len(res.remaining)} "
              f"feasible={len(res.feasible_points)} excludedVolume={num(vol_ex)}", file=out)
    return EXIT_OK


def _bench_problems(args):
    if args.random:
        rng = np.random.default_rng(args.seed)
        for k in range(args.random):
            n, m = int(rng.integers(1, 4)), int(rng.integers(1, 4))
            yield f"random{k}", random_csp(rng, n, m)
    else:
        if not args.directory:
            raise CliError("bench needs a directory or --random K")
        d = Path(args.directory)
        if not d.is_dir():
            raise CliError(f"not a directory: {d}")
        for p in sorted(d.glob("*.json")):
            yield p.stem, load_problem(p)


def cmd_bench(args, out) -> int:
    """Run variant A (T=1) and variant B (T=|y|) on each problem."""
    rows = []
    opts = _find_opts(args)
    for name, csp in _bench_problems(args):
        row = {"problem": name}
        reps = []
        for tag, t in (("A", "one"), ("B", "norm-y")):
            fixed = not args.variable_box
            r = None if fixed else args.r_fraction * (csp.x_hi - csp.x_lo)
            res = find_exclusion_box(csp, None, r, TChoice.parse(t), fixed_box=fixed, opts=opts)
            rep = res.report
            status = {Excluded: "excluded", FeasibleFound: "feasible"}.get(type(res), "unknown")
            row["status" + tag] = status
            row["f" + tag] = rep.best_value if rep else float("nan")
            row["nCalls" + tag] = rep.counters.n_calls if rep else 0
            row["cost" + tag] = rep.cost if rep else 0.0
            reps.append(rep)
        a, b = reps
        if a is not None and b is not None:
            row["rp"] = rp_cost(a.counters, b.counters)
        else:
            row["rp"] = row["costB"] - row["costA"]
        rows.append(row)
    _write(emit_bench(rows), args.report, out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--t", choices=["one", "norm-y"], default="norm-y", help="denominator T")
    common.add_argument("--r-fraction", type=float, default=0.25,
                        help="minimal box width as a fraction of the domain width")
    common.add_argument("--max-iter", type=int, default=100)
    common.add_argument("--tol", type=float, default=1e-5)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--report", help="write CSV here instead of stdout")
    common.add_argument("--rigorous", action="store_true",
                        help="accepted for compatibility; certificates are always re-verified rigorously")
    common.add_argument("--early-exit", action="store_true", help="stop at the first negative f")
    common.add_argument("--w-start", choices=["cholesky", "zero"], default="cholesky")
    common.add_argument("--optimize-w", action="store_true", help="also optimize R and S")
    common.add_argument("--strict", action="store_true", help="strictly interior start box")
    common.add_argument("--variable-box", action="store_true",
                        help="let the box [u,v] move (default: fixed to the domain)")

    ap = _Parser(prog="qcsp-exclusion", description="Exclusion boxes for quadratic CSPs.")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in ("check", "find", "enlarge", "prune"):
        sp = sub.add_parser(name, parents=[common])
        sp.add_argument("problem")
        if name == "enlarge":
            sp.add_argument("--delta", type=float, default=None)
            sp.add_argument("--measure", choices=[m.value for m in BoxMeasure], default="pos-l1")
        if name == "prune":
            sp.add_argument("--max-boxes", type=int, default=50)
            sp.add_argument("--no-enlarge", action="store_true")
            sp.add_argument("--timing", action="store_true", help="record wall-clock times")
    sp = sub.add_parser("split", parents=[common])
    sp.add_argument("--outer", required=True, help="box as lo:hi,lo:hi,...")
    sp.add_argument("--inner", required=True)
    sp = sub.add_parser("bench", parents=[common])
    sp.add_argument("directory", nargs="?")
    sp.add_argument("--random", type=int, default=0, metavar="K")
    return ap


COMMANDS = {"check": cmd_check, "find": cmd_find, "enlarge": cmd_enlarge,
            "split": cmd_split, "prune": cmd_prune, "bench": cmd_bench}


def run(argv: Optional[Sequence[str]] = None, out=None, err=None) -> int:
    out = sys.stdout if out is None else out
    err = sys.stderr if err is None else err
    try:
        args = build_parser().parse_args(argv)
        if not 0 <= args.r_fraction < 1:
            raise CliError("--r-fraction must lie in [0, 1)")
        if args.tol <= 0 or args.max_iter < 0:
            raise CliError("--tol must be positive and --max-iter nonnegative")
        return COMMANDS[args.command](args, out)
    except (CliError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=err)
        return EXIT_ERROR


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
