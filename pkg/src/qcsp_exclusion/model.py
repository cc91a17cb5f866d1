"""Quadratic constraint satisfaction problems.

A problem asks for ``x`` in a domain box with ``F_k(x) = c_k^T x + x^T C_k x``
inside the range ``F_k`` for every constraint ``k``.  The quadratic
coefficient matrices are stored lower triangular.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass
from typing import Any, Sequence

import numpy as np

from .interval import BoxVec, Interval, add, mul, scale

__all__ = [
    "ProblemFormatError",
    "QuadraticCsp",
    "eval_F",
    "eval_F_interval",
    "is_feasible",
    "slope_row",
    "parse_problem",
    "serialize_problem",
    "load_problem",
    "random_csp",
]


class ProblemFormatError(ValueError):
    """A problem description does not satisfy the file schema."""


def _frozen(a, shape=None) -> np.ndarray:
    a = np.array(a, dtype=float)
    if shape is not None:
        a = a.reshape(shape)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class QuadraticCsp:
    """Constraint data of a quadratic CSP.

    Attributes
    ----------
    c : (m, n) array
        Linear coefficients, one row per constraint.
    C : (m, n, n) array
        Lower triangular quadratic coefficients.
    F_lo, F_hi : (m,) arrays
        Constraint ranges; entries may be infinite.
    x_lo, x_hi : (n,) arrays
        Finite domain box.
    """

    c: np.ndarray
    C: np.ndarray
    F_lo: np.ndarray
    F_hi: np.ndarray
    x_lo: np.ndarray
    x_hi: np.ndarray

    def __post_init__(self) -> None:
        c = np.atleast_2d(np.asarray(self.c, dtype=float))
        m, n = c.shape
        C = np.asarray(self.C, dtype=float).reshape(m, n, n)
        object.__setattr__(self, "c", _frozen(c))
        object.__setattr__(self, "C", _frozen(C))
        for name, size in (("F_lo", m), ("F_hi", m), ("x_lo", n), ("x_hi", n)):
            object.__setattr__(self, name, _frozen(np.asarray(getattr(self, name), dtype=float).ravel()))
            if getattr(self, name).shape != (size,):
                raise ProblemFormatError(f"{name}: expected length {size}")
        for k in range(m):
            upper = np.argwhere(np.triu(C[k], 1) != 0)
            if len(upper):
                i, j = upper[0]
                raise ProblemFormatError(
                    f"C[{k}][{i}][{j}]: entry above the diagonal must be zero"
                )
        if np.any(np.isnan(self.F_lo)) or np.any(np.isnan(self.F_hi)):
            raise ProblemFormatError("F: NaN bound")
        bad = np.flatnonzero(self.F_lo > self.F_hi)
        if len(bad):
            raise ProblemFormatError(f"F[{bad[0]}]: lower bound exceeds upper bound")
        if not (np.all(np.isfinite(self.x_lo)) and np.all(np.isfinite(self.x_hi))):
            raise ProblemFormatError("x: domain bounds must be finite")
        bad = np.flatnonzero(self.x_lo > self.x_hi)
        if len(bad):
            raise ProblemFormatError(f"x[{bad[0]}]: lower bound exceeds upper bound")

    @property
    def n(self) -> int:
        return self.c.shape[1]

    @property
    def m(self) -> int:
        return self.c.shape[0]

    @property
    def w_dimension(self) -> int:
        return self.n * self.n

    @property
    def domain(self) -> BoxVec:
        return BoxVec.from_bounds(self.x_lo, self.x_hi)

    @property
    def Frange(self) -> tuple[Interval, ...]:
        return tuple(Interval(a, b) for a, b in zip(self.F_lo, self.F_hi))

    @property
    def vacuous(self) -> np.ndarray:
        """Mask of constraints whose range is the whole real line."""
        return np.isneginf(self.F_lo) & np.isposinf(self.F_hi)

    def with_domain(self, lo, hi) -> QuadraticCsp:
        return QuadraticCsp(self.c, self.C, self.F_lo, self.F_hi, lo, hi)

    def with_ranges(self, F_lo, F_hi) -> QuadraticCsp:
        return QuadraticCsp(self.c, self.C, F_lo, F_hi, self.x_lo, self.x_hi)

    def __eq__(self, other) -> bool:
        if not isinstance(other, QuadraticCsp):
            return NotImplemented
        return all(
            np.array_equal(getattr(self, f), getattr(other, f))
            for f in ("c", "C", "F_lo", "F_hi", "x_lo", "x_hi")
        )

    __hash__ = None


def eval_F(csp: QuadraticCsp, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (csp.n,):
        raise ValueError(f"point has shape {x.shape}, expected ({csp.n},)")
    return csp.c @ x + np.einsum("i,kij,j->k", x, csp.C, x)


def eval_F_interval(csp: QuadraticCsp, box: BoxVec, rigorous: bool = False) -> list[Interval]:
    """Natural interval extension of ``F`` over a box (or a point box)."""
    out = []
    for k in range(csp.m):
        acc = Interval.point(0.0)
        for i in range(csp.n):
            acc = add(acc, scale(box[i], csp.c[k, i], rigorous), rigorous)
            for j in range(i + 1):
                if csp.C[k, i, j] != 0.0:
                    term = scale(mul(box[i], box[j], rigorous), csp.C[k, i, j], rigorous)
                    acc = add(acc, term, rigorous)
        out.append(acc)
    return out


def is_feasible(csp: QuadraticCsp, x) -> bool:
    x = np.asarray(x, dtype=float)
    if x.shape != (csp.n,) or not np.all((csp.x_lo <= x) & (x <= csp.x_hi)):
        return False
    Fx = eval_F(csp, x)
    return bool(np.all((csp.F_lo <= Fx) & (Fx <= csp.F_hi)))


def slope_row(csp: QuadraticCsp, k: int, z, x) -> np.ndarray:
    """Slope ``F_k[z, x]`` with ``F_k(x) - F_k(z) = F_k[z, x] (x - z)``."""
    z = np.asarray(z, dtype=float)
    x = np.asarray(x, dtype=float)
    Ck = csp.C[k]
    return csp.c[k] + x @ Ck + z @ Ck.T


# --- problem files ---------------------------------------------------------

_REQUIRED = ("n", "m", "c", "C", "F", "x")


def _num(v, path: str, allow_inf: bool = False) -> float:
    if isinstance(v, str):
        key = v.strip().lower()
        if allow_inf and key in ("inf", "+inf", "infinity", "+infinity"):
            return math.inf
        if allow_inf and key in ("-inf", "-infinity"):
            return -math.inf
        raise ProblemFormatError(f"{path}: expected a number, got {v!r}")
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ProblemFormatError(f"{path}: expected a number, got {v!r}")
    v = float(v)
    if math.isnan(v) or (math.isinf(v) and not allow_inf):
        raise ProblemFormatError(f"{path}: value {v} not allowed")
    return v


def _list(v, length: int, path: str) -> list:
    if not isinstance(v, list) or len(v) != length:
        raise ProblemFormatError(f"{path}: expected a list of length {length}")
    return v


def _lower_matrix(rows, n: int, k: int) -> np.ndarray:
    M = np.array(
        [[_num(e, f"C[{k}][{i}][{j}]") for j, e in enumerate(_list(r, n, f"C[{k}][{i}]"))]
         for i, r in enumerate(_list(rows, n, f"C[{k}]"))]
    )
    upper = np.triu(M, 1)
    if not np.any(upper):
        return M
    if np.array_equal(M, M.T):
        # symmetric full storage: fold onto the lower triangle, x^T C x unchanged
        warnings.warn(f"C[{k}] given as a full symmetric matrix; folded to lower triangular")
        return np.tril(M) + np.tril(M.T, -1)
    i, j = np.argwhere(upper != 0)[0]
    raise ProblemFormatError(f"C[{k}][{i}][{j}]: entry above the diagonal must be zero")


def parse_problem(text: str) -> QuadraticCsp:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ProblemFormatError(f"not a valid problem document: {exc}") from None
    if not isinstance(doc, dict):
        raise ProblemFormatError("top level must be an object")
    for key in _REQUIRED:
        if key not in doc:
            raise ProblemFormatError(f"{key}: missing required key")
    n, m = doc["n"], doc["m"]
    if not isinstance(n, int) or n < 1:
        raise ProblemFormatError("n: expected a positive integer")
    if not isinstance(m, int) or m < 0:
        raise ProblemFormatError("m: expected a nonnegative integer")
    c = [[_num(e, f"c[{k}][{i}]") for i, e in enumerate(_list(row, n, f"c[{k}]"))]
         for k, row in enumerate(_list(doc["c"], m, "c"))]
    C = [_lower_matrix(mat, n, k) for k, mat in enumerate(_list(doc["C"], m, "C"))]
    F = [[_num(e, f"F[{k}][{i}]", allow_inf=True) for i, e in enumerate(_list(pair, 2, f"F[{k}]"))]
         for k, pair in enumerate(_list(doc["F"], m, "F"))]
    x = [[_num(e, f"x[{i}][{j}]") for j, e in enumerate(_list(pair, 2, f"x[{i}]"))]
         for i, pair in enumerate(_list(doc["x"], n, "x"))]
    F = np.array(F, dtype=float).reshape(m, 2)
    x = np.array(x, dtype=float).reshape(n, 2)
    return QuadraticCsp(
        np.array(c, dtype=float).reshape(m, n),
        np.array(C, dtype=float).reshape(m, n, n),
        F[:, 0], F[:, 1], x[:, 0], x[:, 1],
    )


def _out(v: float) -> Any:
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return int(v) if float(v).is_integer() and abs(v) < 2**53 else float(v)


def serialize_problem(csp: QuadraticCsp) -> str:
    doc = {
        "n": csp.n,
        "m": csp.m,
        "c": [[_out(v) for v in row] for row in csp.c],
        "C": [[[_out(v) for v in row] for row in mat] for mat in csp.C],
        "F": [[_out(a), _out(b)] for a, b in zip(csp.F_lo, csp.F_hi)],
        "x": [[_out(a), _out(b)] for a, b in zip(csp.x_lo, csp.x_hi)],
    }
    return json.dumps(doc, indent=1)


def load_problem(path) -> QuadraticCsp:
    with open(path, encoding="utf-8") as fh:
        return parse_problem(fh.read())


def random_csp(rng: np.random.Generator, n: int, m: int, *, scale_: float = 2.0,
               infinite_prob: float = 0.2) -> QuadraticCsp:
    """Random instance whose ranges sit near the values of F over the domain.

    About half of the generated instances are infeasible somewhere in the
    domain, which is what the test suites need.
    """
    x_lo = rng.uniform(-3, 0, size=n)
    x_hi = x_lo + rng.uniform(0.5, 4, size=n)
    c = rng.normal(scale=scale_, size=(m, n))
    C = np.tril(rng.normal(scale=scale_ / 2, size=(m, n, n)))
    csp = QuadraticCsp(c, C, np.full(m, -np.inf), np.full(m, np.inf), x_lo, x_hi)
    samples = rng.uniform(x_lo, x_hi, size=(64, n))
    vals = np.array([eval_F(csp, s) for s in samples])
    F_lo = np.empty(m)
    F_hi = np.empty(m)
    for k in range(m):
        a, b = np.sort(rng.choice(vals[:, k], size=2))
        shift = rng.normal(scale=0.5 * (np.ptp(vals[:, k]) + 1e-3))
        F_lo[k], F_hi[k] = a + shift, b + shift
        r = rng.random()
        if r < infinite_prob / 2:
            F_lo[k] = -np.inf
        elif r < infinite_prob:
            F_hi[k] = np.inf
    return csp.with_ranges(F_lo, F_hi)
