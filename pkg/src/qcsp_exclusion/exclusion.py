"""Finding, enlarging and splitting around exclusion boxes."""

from __future__ import annotations

import enum
import math
import time
import warnings
from collections import deque
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .certificate import (
    CertificateError,
    CertPoint,
    OptMask,
    TChoice,
    evaluate,
    f_value,
    flatten_grad,
    verify,
)
from .interval import BoxVec, Interval
from .model import QuadraticCsp, is_feasible
from .solver import (
    EvalCounters,
    LinearConstraints,
    Oracle,
    SolveOptions,
    SolveReport,
    Status,
    cost,
    minimize,
    minimize_constrained,
)
from .startpoint import Feasible, StartOptions, starting_point

__all__ = [
    "ExclusionCertificate",
    "BoxMeasure",
    "FindOptions",
    "Excluded",
    "FeasibleFound",
    "Unknown",
    "find_exclusion_box",
    "enlarge_exclusion_box",
    "box_measure",
    "split_complement",
    "objective_cut",
    "PruneRow",
    "PruneResult",
    "prune",
]


@dataclass
class ExclusionCertificate:
    u: np.ndarray
    v: np.ndarray
    witness: CertPoint
    f_value: float
    t_choice: TChoice
    report: Optional[SolveReport] = field(default=None, compare=False, repr=False)

    def __post_init__(self) -> None:
        if not self.f_value < 0:
            raise ValueError("an exclusion certificate needs a negative value")

    @property
    def box(self) -> BoxVec:
        return BoxVec.from_bounds(self.u, self.v)

    def recheck(self, csp: QuadraticCsp) -> float:
        """Re-evaluate the certificate at its witness."""
        return f_value(csp, self.witness, self.t_choice).f


class BoxMeasure(enum.Enum):
    NEG_L1 = "neg-l1"
    NEG_HALF_L2SQ = "neg-l2"
    NEG_LINF = "neg-linf"
    POS_L1 = "pos-l1"
    POS_HALF_L2SQ = "pos-l2"
    POS_LINF = "pos-linf"

    @property
    def positive(self) -> bool:
        return self.name.startswith("POS")


def box_measure(kind: BoxMeasure, u, v, lo=None, hi=None) -> float:
    return _measure(kind, u, v, lo, hi)[0]


def _measure(kind: BoxMeasure, u, v, lo, hi):
    """Box measure and its gradient with respect to ``(u, v)``."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    n = u.size
    if kind.positive:
        if lo is None or hi is None or not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise ValueError(f"{kind.value} needs a bounded domain")
        e = np.concatenate([u - np.asarray(lo, dtype=float), v - np.asarray(hi, dtype=float)])
        # one-sided signs: u - lo >= 0 and v - hi <= 0 on the feasible set
        sgn = np.concatenate([np.where(e[:n] >= 0, 1.0, -1.0), np.where(e[n:] <= 0, -1.0, 1.0)])
        if kind is BoxMeasure.POS_L1:
            return float(np.abs(e).sum()), sgn
        if kind is BoxMeasure.POS_HALF_L2SQ:
            return float(0.5 * e @ e), e
        k = int(np.argmax(np.abs(e)))
        g = np.zeros(2 * n)
        g[k] = sgn[k]
        return float(np.abs(e[k])), g
    w = v - u
    if kind is BoxMeasure.NEG_L1:
        g = np.concatenate([np.where(w >= 0, 1.0, -1.0), np.where(w >= 0, -1.0, 1.0)])
        return -float(np.abs(w).sum()), g
    if kind is BoxMeasure.NEG_HALF_L2SQ:
        return -float(0.5 * w @ w), np.concatenate([w, -w])
    k = int(np.argmax(np.abs(w)))
    g = np.zeros(2 * n)
    s = 1.0 if w[k] >= 0 else -1.0
    g[k], g[n + k] = s, -s
    return -float(np.abs(w[k])), g


@dataclass
class FindOptions:
    max_iter: int = 100
    tol: float = 1e-5
    early_exit: bool = False
    optimize_w: bool = False
    w_start: str = "cholesky"
    strict_interior: bool = False


@dataclass
class Excluded:
    certificate: ExclusionCertificate
    report: SolveReport


@dataclass
class FeasibleFound:
    point: np.ndarray
    report: Optional[SolveReport] = None


@dataclass
class Unknown:
    report: SolveReport


FindOutcome = Union[Excluded, FeasibleFound, Unknown]


def _y_bounds(csp: QuadraticCsp):
    # keep Y finite: an infinite bound forbids the matching sign of y_k
    lb = np.where(np.isposinf(csp.F_hi), 0.0, -np.inf)
    ub = np.where(np.isneginf(csp.F_lo), 0.0, np.inf)
    return lb, ub


def _layout(p: CertPoint):
    """Index arrays of each active block inside the packed vector."""
    return {k: np.arange(s.start, s.stop) for k, s in p.slices().items()}


def _bounds_and_rows(csp, p: CertPoint, z_lo, z_hi, u_rng, v_rng, r=None):
    N = p.pack().size
    idx = _layout(p)
    lb = np.full(N, -np.inf)
    ub = np.full(N, np.inf)
    ylb, yub = _y_bounds(csp)
    if "y" in idx:
        lb[idx["y"]], ub[idx["y"]] = ylb, yub
    if "z" in idx:
        lb[idx["z"]], ub[idx["z"]] = z_lo, z_hi
    if "u" in idx:
        lb[idx["u"]], ub[idx["u"]] = u_rng
    if "v" in idx:
        lb[idx["v"]], ub[idx["v"]] = v_rng
    cons = LinearConstraints(lb, ub)
    n = p.n
    if "z" in idx:
        for i in range(n):
            if "u" in idx:
                a = np.zeros(N)
                a[idx["u"][i]], a[idx["z"][i]] = 1.0, -1.0
                cons.add_row(a, 0.0)
            if "v" in idx:
                a = np.zeros(N)
                a[idx["z"][i]], a[idx["v"][i]] = 1.0, -1.0
                cons.add_row(a, 0.0)
    if r is not None and "u" in idx and "v" in idx:
        for i in range(n):
            if r[i] > 0:
                a = np.zeros(N)
                a[idx["u"][i]], a[idx["v"][i]] = 1.0, -1.0
                cons.add_row(a, -r[i])
    return cons


def _certificate_oracle(csp, template: CertPoint, choice: TChoice, shift: float = 0.0):
    def fn(x):
        p = template.unpack(x)
        try:
            val, grads = evaluate(csp, p, choice)
        except CertificateError:
            return math.inf, None
        if grads is None:
            return math.inf, None
        return val.f - shift, flatten_grad(p, grads)
    return fn


def _tidy(p: CertPoint, lo, hi) -> CertPoint:
    """Clip rounding noise so that ``lo <= u <= z <= v <= hi`` holds exactly."""
    q = p.copy()
    q.u = np.clip(q.u, lo, hi)
    q.v = np.clip(q.v, q.u, hi)
    q.z = np.clip(q.z, q.u, q.v)
    return q


def find_exclusion_box(csp: QuadraticCsp, region: Optional[BoxVec] = None, r=None,
                       choice: TChoice = TChoice(), fixed_box: bool = False,
                       opts: FindOptions = FindOptions()) -> FindOutcome:
    """Search ``region`` for a sub-box with a negative certificate.

    With ``fixed_box`` the box is the whole region and only ``y, z`` (and
    optionally ``R, S``) move; otherwise ``u, v`` move too, subject to
    ``u + r <= v``.  Points ``z`` that turn out to be feasible end the search.
    """
    region = csp.domain if region is None else region
    lo, hi = region.lo, region.hi
    if not region.subset_of(csp.domain):
        raise ValueError("region must lie inside the problem domain")
    width = hi - lo
    if fixed_box:
        r = None
    elif r is None:
        r = 0.25 * width
    else:
        r = np.broadcast_to(np.asarray(r, dtype=float), lo.shape).copy()
        if np.any(r < 0) or np.any(r > width):
            raise ValueError("r must lie between 0 and the region width")

    mask = OptMask(y=True, z=True, w=opts.optimize_w, u=not fixed_box, v=not fixed_box)
    sopts = StartOptions(strict_interior=opts.strict_interior, r=r if opts.strict_interior else None)
    start = starting_point(csp, sopts, choice, lo=lo, hi=hi, mask=mask)
    if isinstance(start, Feasible):
        return FeasibleFound(start.point)
    p0 = start.point
    if opts.w_start == "zero":
        p0.R[:] = 0.0
        p0.S[:] = 0.0
    cons = _bounds_and_rows(csp, p0, lo, hi, (lo, hi), (lo, hi), r)
    oracle = Oracle(_certificate_oracle(csp, p0, choice), cons.dimension)

    found = {}

    def stop(value, x):
        p = p0.unpack(x)
        if is_feasible(csp, p.z):
            found["feasible"] = p.z.copy()
            return True
        if opts.early_exit and value < 0:
            return verify(csp, _tidy(p, lo, hi), choice)
        return False

    try:
        rep = minimize(oracle, cons, p0.pack(), SolveOptions(max_iter=opts.max_iter, tol=opts.tol),
                       early_exit=stop)
    except ValueError:
        # certificate undefined at the start (e.g. every y_k forced to zero)
        x0 = p0.pack()
        rep = SolveReport(Status.ITER_LIMIT, x0, math.inf, 0, oracle.counters, cost(oracle.counters))
        return Unknown(rep)
    if "feasible" in found:
        return FeasibleFound(found["feasible"], rep)
    if rep.status is Status.INFEASIBLE:
        return Unknown(rep)
    best = _tidy(p0.unpack(rep.best), lo, hi)
    try:
        val = f_value(csp, best, choice).f
    except CertificateError:
        return Unknown(rep)
    if val < 0 and verify(csp, best, choice):
        cert = ExclusionCertificate(best.u.copy(), best.v.copy(), best, val, choice, rep)
        return Excluded(cert, rep)
    return Unknown(rep)


def enlarge_exclusion_box(csp: QuadraticCsp, cert: ExclusionCertificate,
                          delta: Optional[float] = None,
                          measure: BoxMeasure = BoxMeasure.POS_L1,
                          opts: FindOptions = FindOptions(),
                          region: Optional[BoxVec] = None,
                          penalty0: float = 10.0, growth: float = 10.0,
                          rounds: int = 3) -> ExclusionCertificate:
    """Grow ``cert``'s box inside ``region`` while keeping ``f <= delta``."""
    region = csp.domain if region is None else region
    lo, hi = region.lo, region.hi
    if delta is None:
        delta = 0.5 * cert.f_value
    if not (cert.f_value <= delta < 0):
        raise ValueError("delta must lie in [certificate value, 0)")
    if measure.positive and not region.is_bounded():
        raise ValueError(f"{measure.value} needs a bounded region")

    if opts.max_iter <= 0:
        return cert
    mask = OptMask(y=True, z=True, w=opts.optimize_w, u=True, v=True)
    p0 = cert.witness.with_mask(mask)
    cons = _bounds_and_rows(csp, p0, lo, hi, (lo, cert.u), (cert.v, hi))
    idx = _layout(p0)
    uv = np.concatenate([idx["u"], idx["v"]])
    N = cons.dimension

    def obj_fn(x):
        b, g = _measure(measure, x[idx["u"]], x[idx["v"]], lo, hi)
        grad = np.zeros(N)
        grad[uv] = g
        return b, grad

    obj = Oracle(obj_fn, N)
    con = Oracle(_certificate_oracle(csp, p0, cert.t_choice, shift=delta), N)
    x0 = p0.pack()
    rep = minimize_constrained(obj, con, cons, x0, SolveOptions(max_iter=opts.max_iter, tol=opts.tol),
                               penalty0=penalty0, growth=growth, rounds=rounds)
    if rep.status is Status.INFEASIBLE:
        raise AssertionError("enlargement start violates f <= delta")
    best = _tidy(p0.unpack(rep.best), lo, hi)
    # bounds u <= u_hat, v >= v_hat must survive the clipping
    best.u = np.minimum(best.u, cert.u)
    best.v = np.maximum(best.v, cert.v)
    best.z = np.clip(best.z, best.u, best.v)
    val = f_value(csp, best, cert.t_choice).f
    if val <= delta and verify(csp, best, cert.t_choice):
        return ExclusionCertificate(best.u.copy(), best.v.copy(), best, val, cert.t_choice, rep)
    return cert


def split_complement(outer: BoxVec, inner: BoxVec) -> list[BoxVec]:
    """Cover ``outer`` minus the interior of ``inner`` by at most ``2n`` boxes.

    Slabs are peeled off one coordinate at a time (last coordinate first);
    zero-width slabs are skipped.
    """
    if not inner.subset_of(outer):
        raise ValueError("inner box is not contained in the outer box")
    cur = list(outer.comps)
    pieces = []
    for i in reversed(range(len(cur))):
        a, b = cur[i], inner[i]
        if a.lo < b.lo:
            pieces.append(BoxVec(tuple(cur[:i] + [Interval(a.lo, b.lo)] + cur[i + 1:])))
        if b.hi < a.hi:
            pieces.append(BoxVec(tuple(cur[:i] + [Interval(b.hi, a.hi)] + cur[i + 1:])))
        cur[i] = b
    return pieces


def objective_cut(csp: QuadraticCsp, objective, f_cur: float) -> QuadraticCsp:
    """CSP whose first constraint is ``objective(x) <= f_cur``.

    ``objective`` is either the index of an existing constraint, which is
    moved to the front, or a pair ``(c, C)`` of new quadratic data.
    """
    if isinstance(objective, (int, np.integer)):
        k = int(objective)
        order = [k] + [i for i in range(csp.m) if i != k]
        c, C = csp.c[order], csp.C[order]
        F_lo, F_hi = csp.F_lo[order].copy(), csp.F_hi[order].copy()
    else:
        oc, oC = objective
        oc = np.asarray(oc, dtype=float).reshape(1, csp.n)
        oC = np.asarray(oC, dtype=float).reshape(1, csp.n, csp.n)
        c = np.vstack([oc, csp.c])
        C = np.concatenate([oC, csp.C])
        F_lo = np.concatenate([[-np.inf], csp.F_lo])
        F_hi = np.concatenate([[np.inf], csp.F_hi])
    F_lo[0], F_hi[0] = -np.inf, float(f_cur)
    if math.isinf(f_cur):
        warnings.warn("objective cut at +inf is vacuous")
    return QuadraticCsp(c, C, F_lo, F_hi, csp.x_lo, csp.x_hi)


# --- prune loop --------------------------------------------------------------

@dataclass
class PruneRow:
    box_id: int
    parent_id: int
    lo: np.ndarray
    hi: np.ndarray
    status: str
    f_value: float
    iterations: int
    n_calls: int
    cost: float
    wall_ms: float


@dataclass
class PruneResult:
    excluded: list
    remaining: list
    feasible_points: list
    rows: list


def _bisect(box: BoxVec):
    i = int(np.argmax(box.width))
    c = box[i]
    m = c.mid
    left = list(box.comps)
    right = list(box.comps)
    left[i] = Interval(c.lo, m)
    right[i] = Interval(m, c.hi)
    return BoxVec(tuple(left)), BoxVec(tuple(right))


def prune(csp: QuadraticCsp, max_boxes: int = 50, max_iter_per_box: int = 50,
          r_fraction: float = 0.25, choice: TChoice = TChoice(), enlarge: bool = True,
          measure: BoxMeasure = BoxMeasure.POS_L1, min_width: float = 1e-9,
          timing: bool = False) -> PruneResult:
    """Worklist loop: exclude, enlarge, split the rest; bisect otherwise.

    Boxes that are never proven infeasible stay in ``remaining``; together
    with ``excluded`` they tile the domain.
    """
    if not 0 <= r_fraction < 1:
        raise ValueError("r_fraction must lie in [0, 1)")
    work = deque([(csp.domain, 0, -1)])
    next_id = 1
    excluded, remaining, feasible, rows = [], [], [], []
    opts = FindOptions(max_iter=max_iter_per_box, early_exit=True)
    processed = 0
    while work and processed < max_boxes:
        box, bid, parent = work.popleft()
        processed += 1
        t0 = time.perf_counter()
        out = find_exclusion_box(csp, box, r_fraction * box.width, choice, fixed_box=False, opts=opts)
        children = []
        if isinstance(out, Excluded):
            cert = out.certificate
            calls = out.report.counters.n_calls
            c = out.report.cost
            iters = out.report.iterations
            if enlarge:
                try:
                    bigger = enlarge_exclusion_box(csp, cert, measure=measure, opts=opts, region=box)
                except (ValueError, AssertionError):
                    bigger = cert
                if bigger is not cert and bigger.report is not None:
                    calls += bigger.report.counters.n_calls
                    c += bigger.report.cost
                    iters += bigger.report.iterations
                cert = bigger
            excluded.append(cert)
            children = split_complement(box, cert.box)
            status, fval, lo_, hi_ = "excluded", cert.f_value, cert.u, cert.v
        else:
            rep = out.report
            calls = rep.counters.n_calls if rep else 0
            c = rep.cost if rep else 0.0
            iters = rep.iterations if rep else 0
            if isinstance(out, FeasibleFound):
                feasible.append(np.asarray(out.point))
                status = "feasible"
            else:
                status = "unknown"
            fval = rep.best_value if (rep and isinstance(out, Unknown)) else math.nan
            lo_, hi_ = box.lo, box.hi
            if np.max(box.width) > min_width:
                children = list(_bisect(box))
            else:
                remaining.append(box)
        wall = (time.perf_counter() - t0) * 1e3 if timing else 0.0
        rows.append(PruneRow(bid, parent, np.array(lo_), np.array(hi_), status, fval, iters, calls, c, wall))
        for child in children:
            work.append((child, next_id, bid))
            next_id += 1
    remaining.extend(b for b, _, _ in work)
    return PruneResult(excluded, remaining, feasible, rows)
