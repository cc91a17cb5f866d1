"""Local nonsmooth minimization under bound and linear constraints.

:func:`minimize` is a proximal bundle method: cutting planes collected at
trial points form a piecewise linear model, and each step minimizes the model
plus ``|x - x_c|^2 / (2 t)`` over the linear constraints with the in-repo
active-set QP.  Iterates stay feasible for the linear constraints throughout.
:func:`minimize_constrained` adds one nonsmooth inequality through an exact
l1 penalty and only ever reports points that satisfy it.

Evaluations are counted per oracle; :func:`cost` implements the credit point
accounting used to compare solvers.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .qp import QPError, solve_qp

__all__ = [
    "EvalCounters",
    "Oracle",
    "LinearConstraints",
    "Status",
    "SolveReport",
    "SolveOptions",
    "minimize",
    "minimize_constrained",
    "cost",
    "credit_cost",
    "rp_cost",
]

log = logging.getLogger(__name__)


@dataclass
class EvalCounters:
    n_calls: int = 0
    n_constraint_calls: int = 0
    dimension: int = 0
    nlc: int = 0


def cost(counters: EvalCounters, convention: str = "value-subgradient") -> float:
    """Evaluation cost of a run.

    ``value-subgradient`` charges ``1 + 3`` per call (value and subgradient,
    no Hessian information), which is what our oracles provide.
    ``bundle-newton`` charges ``1 + 3 + 3N`` per call for solvers that also
    evaluate a Hessian substitute at every call.
    """
    table = {
        "value-subgradient": 1 + 3,
        "bundle-newton": 1 + 3 + 3 * counters.dimension,
    }
    if convention not in table:
        raise ValueError(f"unknown cost convention {convention!r}")
    per_call = table[convention]
    return float((1 + counters.nlc) * counters.n_calls * per_call)


def credit_cost(f: int, g: int, G: int, N: int, nlc: int = 0,
                F: int = 0, g_hat: int = 0, G_hat: int = 0) -> float:
    """General credit count: values 1, subgradients 3, Hessians 3N each."""
    return float(f + 3 * g + 3 * N * G + nlc * (F + 3 * g_hat + 3 * N * G_hat))


def rp_cost(a: EvalCounters, b: EvalCounters, convention: str = "value-subgradient") -> float:
    """Record-plot ordinate: positive when run ``a`` was cheaper than ``b``."""
    return cost(b, convention) - cost(a, convention)


class Oracle:
    """Counts every call of ``fn(x) -> (value, subgradient)``."""

    def __init__(self, fn: Callable, dimension: int = 0):
        self.fn = fn
        self.counters = EvalCounters(dimension=dimension)

    def __call__(self, x):
        self.counters.n_calls += 1
        return self.fn(x)


@dataclass
class LinearConstraints:
    """Bounds ``lb <= x <= ub`` and rows ``A x <= b``."""

    lb: np.ndarray
    ub: np.ndarray
    A: np.ndarray = None
    b: np.ndarray = None

    def __post_init__(self) -> None:
        self.lb = np.asarray(self.lb, dtype=float).ravel()
        self.ub = np.asarray(self.ub, dtype=float).ravel()
        N = self.lb.size
        if self.ub.size != N:
            raise ValueError("bound vectors differ in length")
        self.A = np.zeros((0, N)) if self.A is None else np.asarray(self.A, dtype=float).reshape(-1, N)
        self.b = np.zeros(0) if self.b is None else np.asarray(self.b, dtype=float).ravel()
        if self.b.size != self.A.shape[0]:
            raise ValueError("row count of A and b differ")

    @classmethod
    def free(cls, N: int) -> LinearConstraints:
        return cls(np.full(N, -np.inf), np.full(N, np.inf))

    @property
    def dimension(self) -> int:
        return self.lb.size

    def add_row(self, a, rhs: float) -> None:
        self.A = np.vstack([self.A, np.asarray(a, dtype=float).reshape(1, -1)])
        self.b = np.append(self.b, float(rhs))

    def violation(self, x) -> float:
        x = np.asarray(x, dtype=float)
        v = max(float(np.max(self.lb - x, initial=0.0)), float(np.max(x - self.ub, initial=0.0)))
        if self.A.shape[0]:
            v = max(v, float(np.max(self.A @ x - self.b, initial=0.0)))
        return v

    def is_feasible(self, x, tol: float = 1e-9) -> bool:
        return self.violation(x) <= tol

    def project(self, x0) -> Optional[np.ndarray]:
        """Nearest feasible point to ``x0``, or ``None`` if the set is empty."""
        if np.any(self.lb > self.ub):
            return None
        x = np.clip(np.asarray(x0, dtype=float), self.lb, self.ub)
        if self.is_feasible(x, 0.0):
            return x
        from scipy.optimize import linprog

        bounds = [(None if math.isinf(l) else l, None if math.isinf(u) else u)
                  for l, u in zip(self.lb, self.ub)]
        res = linprog(np.zeros(x.size), A_ub=self.A, b_ub=self.b, bounds=bounds, method="highs")
        if res.status != 0:
            return None
        G, h = self._rows()
        start = np.clip(res.x, self.lb, self.ub)
        try:
            sol = solve_qp(np.eye(x.size), -np.asarray(x0, dtype=float), G, h, start)
        except QPError:
            return start
        return np.clip(sol.w, self.lb, self.ub)

    def _rows(self):
        """All constraints as rows ``G x <= h``."""
        N = self.dimension
        eye = np.eye(N)
        up = np.isfinite(self.ub)
        lo = np.isfinite(self.lb)
        G = np.vstack([eye[up], -eye[lo], self.A])
        h = np.concatenate([self.ub[up], -self.lb[lo], self.b])
        return G, h


class Status(enum.Enum):
    EARLY_EXIT = "EarlyExit"
    STATIONARY = "Stationary"
    ITER_LIMIT = "IterLimit"
    INFEASIBLE = "Infeasible"


@dataclass
class SolveReport:
    status: Status
    best: np.ndarray
    best_value: float
    iterations: int
    counters: EvalCounters
    cost: float
    stationarity: float = math.inf
    history: list = field(default_factory=list)


@dataclass
class SolveOptions:
    max_iter: int = 100
    tol: float = 1e-5
    t0: float = 1.0
    t_min: float = 1e-8
    t_max: float = 1e8
    descent: float = 0.1
    bundle_size: int = 30
    locality: float = 1e-2


def _report(status, x, fx, it, counters, stat, history):
    return SolveReport(status, np.array(x, dtype=float), float(fx), it, counters,
                       cost(counters), stat, list(history))


def minimize(oracle: Oracle, cons: LinearConstraints, x0, opts: SolveOptions = None,
             early_exit: Optional[Callable[[float, np.ndarray], bool]] = None,
             **kw) -> SolveReport:
    """Proximal bundle minimization of ``oracle`` over ``cons``.

    ``early_exit(value, x)`` is checked at every accepted iterate (including
    the start); the run stops with ``EarlyExit`` the first time it holds.
    Extra keyword arguments override fields of ``opts``.
    """
    opts = SolveOptions(**{**(opts.__dict__ if opts else {}), **kw})
    counters = oracle.counters
    N = cons.dimension
    counters.dimension = counters.dimension or N
    x = np.asarray(x0, dtype=float)
    if not cons.is_feasible(x):
        x = cons.project(x)
        if x is None:
            return _report(Status.INFEASIBLE, np.asarray(x0, dtype=float), math.inf, 0,
                           counters, math.inf, [])
    fx, gx = oracle(x)
    if not math.isfinite(fx):
        raise ValueError("objective is not finite at the starting point")
    history = [fx]
    if early_exit is not None and early_exit(fx, x):
        return _report(Status.EARLY_EXIT, x, fx, 0, counters, math.inf, history)
    if opts.max_iter <= 0:
        return _report(Status.ITER_LIMIT, x, fx, 0, counters, math.inf, history)

    Gc, hc = cons._rows()
    # bundle entries: (point, value, subgradient)
    bundle = [(x.copy(), fx, np.asarray(gx, dtype=float))]
    t = opts.t0
    nulls = 0
    stat = math.inf
    for it in range(1, opts.max_iter + 1):
        pts = np.array([b[0] for b in bundle])
        vals = np.array([b[1] for b in bundle])
        grads = np.array([b[2] for b in bundle])
        diff = x[None, :] - pts
        lin_err = fx - vals - np.einsum("ij,ij->i", grads, diff)
        alpha = np.maximum(np.abs(lin_err), opts.locality * np.einsum("ij,ij->i", diff, diff))

        # variables (d, xi): min xi + |d|^2 / (2t)
        H = np.zeros((N + 1, N + 1))
        H[:N, :N] = np.eye(N) / t
        q = np.zeros(N + 1)
        q[N] = 1.0
        G_cut = np.hstack([grads, -np.ones((len(bundle), 1))])
        G_lin = np.hstack([Gc, np.zeros((Gc.shape[0], 1))])
        G = np.vstack([G_cut, G_lin])
        h = np.concatenate([alpha, np.maximum(hc - Gc @ x, 0.0)])
        w0 = np.zeros(N + 1)
        w0[N] = float(np.max(-alpha))
        try:
            sol = solve_qp(H, q, G, h, w0)
        except QPError as exc:
            log.debug("QP failed (%s); shrinking t", exc)
            t = max(opts.t_min, 0.25 * t)
            if t <= opts.t_min:
                return _report(Status.STATIONARY, x, fx, it, counters, stat, history)
            continue
        d, xi = sol.w[:N], sol.w[N]
        lam = sol.lam[:len(bundle)]
        stat = float(np.linalg.norm(d) / t + lam @ alpha)
        if stat <= opts.tol:
            return _report(Status.STATIONARY, x, fx, it, counters, stat, history)

        center_x, center_f = x, fx
        xt = np.clip(x + d, cons.lb, cons.ub)
        ft, gt = oracle(xt)
        if not math.isfinite(ft):
            t = max(opts.t_min, 0.25 * t)
            continue
        gt = np.asarray(gt, dtype=float)
        if early_exit is not None and early_exit(ft, xt):
            history.append(min(ft, history[-1]))
            return _report(Status.EARLY_EXIT, xt, ft, it, counters, stat, history)

        if ft <= fx + opts.descent * xi:
            if ft <= fx + 0.5 * xi and t < opts.t_max:
                t = min(opts.t_max, 2.0 * t)
            x, fx = xt, ft
            history.append(fx)
            nulls = 0
        else:
            nulls += 1
            if nulls % 4 == 0:
                t = max(opts.t_min, 0.5 * t)
        bundle.append((xt, ft, gt))

        if len(bundle) > opts.bundle_size:
            bundle = _compress(bundle, lam, grads, alpha, center_x, center_f, x, opts.bundle_size)
    return _report(Status.ITER_LIMIT, x, fx, opts.max_iter, counters, stat, history)


def _compress(bundle, lam, grads, alpha, center_x, center_f, x, cap):
    """Drop unused cuts and fold the QP's active ones into an aggregate cut.

    The aggregate is stored as a pseudo entry anchored at the center where the
    QP was solved: value ``f_c - sum(lam * alpha)``, slope ``sum(lam * g)``.
    """
    newest = bundle[-1]
    center = next(b for b in reversed(bundle) if np.array_equal(b[0], x))
    used = [bundle[i] for i in np.flatnonzero(lam > 1e-12)
            if bundle[i] is not center and bundle[i] is not newest]
    used = used[-max(0, cap - 3):]
    out = [center] + used
    if lam.sum() > 0:
        agg = (np.array(center_x), center_f - float(lam @ alpha), grads.T @ lam)
        out.append(agg)
    if newest is not center:
        out.append(newest)
    return out


def minimize_constrained(obj: Oracle, con: Oracle, cons: LinearConstraints, x0,
                         opts: SolveOptions = None, penalty0: float = 10.0,
                         growth: float = 10.0, rounds: int = 3, **kw) -> SolveReport:
    """Minimize ``obj`` subject to ``con(x) <= 0`` and the linear constraints.

    The nonsmooth constraint enters as ``obj + rho * max(0, con)``; ``rho`` is
    multiplied by ``growth`` after a round whose final point violates the
    constraint.  Only evaluated points with ``con <= 0`` can become the
    reported best point.
    """
    opts = SolveOptions(**{**(opts.__dict__ if opts else {}), **kw})
    x0 = np.asarray(x0, dtype=float)
    counters = EvalCounters(dimension=cons.dimension, nlc=1)

    def both(x):
        counters.n_calls += 1
        counters.n_constraint_calls += 1
        obj.counters.n_calls += 1
        con.counters.n_calls += 1
        fo, go = obj.fn(x)
        fc, gc = con.fn(x)
        return fo, go, fc, gc

    fo, go, fc, gc = both(x0)
    if not (fc <= 0 and cons.is_feasible(x0)):
        return SolveReport(Status.INFEASIBLE, x0, math.inf, 0, counters, cost(counters))
    best = {"x": x0.copy(), "f": fo}
    history = [fo]
    seen = {x0.tobytes(): (fo, go, fc, gc)}
    total_it = 0
    status = Status.ITER_LIMIT
    stat = math.inf
    rho = penalty0
    start = x0
    for _ in range(max(1, rounds)):
        if opts.max_iter <= 0:
            break

        def penalized(x, rho=rho):
            key = x.tobytes()
            if key in seen:
                fo, go, fc, gc = seen[key]
            else:
                fo, go, fc, gc = seen[key] = both(x)
            if not (math.isfinite(fo) and math.isfinite(fc)):
                return math.inf, None
            if fc <= 0 and fo < best["f"] and cons.is_feasible(x):
                best["x"], best["f"] = np.array(x, dtype=float), fo
                history.append(fo)
            if fc > 0:
                return fo + rho * fc, np.asarray(go) + rho * np.asarray(gc)
            return fo, np.asarray(go, dtype=float)

        rep = minimize(Oracle(penalized, cons.dimension), cons, start, opts)
        total_it += rep.iterations
        stat = rep.stationarity
        status = rep.status
        if seen[rep.best.tobytes()][2] <= 0:
            break
        rho *= growth
        start = best["x"]
    return SolveReport(status, best["x"], best["f"], total_it, counters, cost(counters), stat, history)
