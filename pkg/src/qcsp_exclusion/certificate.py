"""The infeasibility certificate ``f = (Z - max(0, Y)) / T`` for quadratic CSPs.

``Z`` bounds ``sup_{x in [u, v]} y^T (F(x) - F(z))`` from above by interval
evaluation of ``(c(y, z)^T + (x - z)^T A(y, R, S)) (x - z)``; ``Y`` is the
exact ``inf y^T (F - F(z))`` over the range box.  A negative value of ``f``
at any ``(y, z, R, S)`` with ``z`` in ``[u, v]`` proves that the box ``[u, v]``
contains no feasible point.

Two evaluation routes exist.  :func:`Z_value` / :func:`f_value` go through
:mod:`qcsp_exclusion.interval` (optionally with outward rounding) and are the
ones used to certify.  :func:`evaluate` is a float-only route that mirrors the
same expression and also returns a subgradient; the solver uses it.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .interval import Interval, add, mul, scale, sub
from .model import QuadraticCsp, eval_F, eval_F_interval

__all__ = [
    "CertificateError",
    "TVariant",
    "TChoice",
    "OptMask",
    "CertPoint",
    "CertValue",
    "C_of_y",
    "c_of_yz",
    "A_of",
    "Z_value",
    "Y_value",
    "T_value",
    "f_value",
    "evaluate",
    "f_subgradient",
    "verify",
]


class CertificateError(ValueError):
    pass


class TVariant(enum.Enum):
    ONE = "one"
    NORM_Y = "norm-y"


@dataclass(frozen=True)
class TChoice:
    variant: TVariant = TVariant.NORM_Y
    epsilon_zero: float = 1e-12

    def __post_init__(self) -> None:
        if not self.epsilon_zero > 0:
            raise ValueError("epsilon_zero must be positive")

    @classmethod
    def parse(cls, name: str) -> TChoice:
        return cls(TVariant(name))


@dataclass(frozen=True)
class OptMask:
    """Which variable blocks are free in an optimization run."""

    y: bool = True
    z: bool = True
    w: bool = False
    u: bool = False
    v: bool = False


def _triu(n: int, k: int):
    return np.triu_indices(n, k)


@dataclass
class CertPoint:
    y: np.ndarray
    z: np.ndarray
    R: np.ndarray
    S: np.ndarray
    u: np.ndarray
    v: np.ndarray
    mask: OptMask = field(default_factory=OptMask)

    def __post_init__(self) -> None:
        for name in ("y", "z", "u", "v"):
            setattr(self, name, np.array(getattr(self, name), dtype=float).ravel())
        n = self.z.size
        self.R = np.triu(np.array(self.R, dtype=float).reshape(n, n))
        self.S = np.triu(np.array(self.S, dtype=float).reshape(n, n), 1)

    @classmethod
    def zeros_w(cls, y, z, u, v, mask: OptMask = OptMask()) -> CertPoint:
        n = np.size(z)
        return cls(y, z, np.zeros((n, n)), np.zeros((n, n)), u, v, mask)

    @property
    def n(self) -> int:
        return self.z.size

    @property
    def m(self) -> int:
        return self.y.size

    def block_sizes(self) -> dict[str, int]:
        n = self.n
        return {"y": self.m, "z": n, "R": n * (n + 1) // 2, "S": n * (n - 1) // 2, "u": n, "v": n}

    def _active(self) -> list[str]:
        mk = self.mask
        names = []
        if mk.y:
            names.append("y")
        if mk.z:
            names.append("z")
        if mk.w:
            names += ["R", "S"]
        if mk.u:
            names.append("u")
        if mk.v:
            names.append("v")
        return names

    def pack(self) -> np.ndarray:
        """Flatten the active blocks into one vector (order y, z, R, S, u, v)."""
        n = self.n
        parts = {
            "y": self.y, "z": self.z, "R": self.R[_triu(n, 0)], "S": self.S[_triu(n, 1)],
            "u": self.u, "v": self.v,
        }
        act = self._active()
        if not act:
            return np.zeros(0)
        return np.concatenate([parts[k] for k in act])

    def unpack(self, x: np.ndarray) -> CertPoint:
        """Copy of this point with the active blocks replaced from ``x``."""
        x = np.asarray(x, dtype=float)
        sizes = self.block_sizes()
        n = self.n
        new = {"y": self.y, "z": self.z, "R": self.R, "S": self.S, "u": self.u, "v": self.v}
        pos = 0
        for name in self._active():
            seg = x[pos:pos + sizes[name]]
            pos += sizes[name]
            if name == "R":
                R = np.zeros((n, n))
                R[_triu(n, 0)] = seg
                new["R"] = R
            elif name == "S":
                S = np.zeros((n, n))
                S[_triu(n, 1)] = seg
                new["S"] = S
            else:
                new[name] = seg.copy()
        if pos != x.size:
            raise ValueError(f"vector of length {x.size} does not match active blocks ({pos})")
        return CertPoint(new["y"], new["z"], new["R"], new["S"], new["u"], new["v"], self.mask)

    def slices(self) -> dict[str, slice]:
        sizes = self.block_sizes()
        out, pos = {}, 0
        for name in self._active():
            out[name] = slice(pos, pos + sizes[name])
            pos += sizes[name]
        return out

    def with_mask(self, mask: OptMask) -> CertPoint:
        return replace(self, mask=mask)

    def copy(self) -> CertPoint:
        return CertPoint(self.y.copy(), self.z.copy(), self.R.copy(), self.S.copy(),
                         self.u.copy(), self.v.copy(), self.mask)


@dataclass(frozen=True)
class CertValue:
    f: float
    Z: float
    Y: float
    T: float


# --- coefficient maps ------------------------------------------------------

def C_of_y(csp: QuadraticCsp, y) -> np.ndarray:
    return np.tensordot(np.asarray(y, dtype=float), csp.C, axes=1)


def c_of_yz(csp: QuadraticCsp, y, z) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    Cy = C_of_y(csp, y)
    return y @ csp.c + (Cy + Cy.T) @ np.asarray(z, dtype=float)


def A_of(csp: QuadraticCsp, y, R, S) -> np.ndarray:
    R = np.asarray(R, dtype=float)
    S = np.asarray(S, dtype=float)
    return C_of_y(csp, y) + R.T @ R + S.T - S


# --- interval route --------------------------------------------------------

def _interval_coefficients(csp: QuadraticCsp, p: CertPoint, rigorous: bool):
    n, m = csp.n, csp.m
    if not rigorous:
        c = c_of_yz(csp, p.y, p.z)
        A = A_of(csp, p.y, p.R, p.S)
        return ([Interval.point(v) for v in c],
                [[Interval.point(A[i, j]) for j in range(n)] for i in range(n)])
    P = Interval.point
    Cy = [[P(0.0) for _ in range(n)] for _ in range(n)]
    for k in range(m):
        for i in range(n):
            for j in range(n):
                if csp.C[k, i, j] != 0.0:
                    Cy[i][j] = add(Cy[i][j], scale(P(csp.C[k, i, j]), p.y[k], True), True)
    c = []
    for j in range(n):
        acc = P(0.0)
        for k in range(m):
            acc = add(acc, scale(P(csp.c[k, j]), p.y[k], True), True)
        for i in range(n):
            acc = add(acc, scale(add(Cy[j][i], Cy[i][j], True), p.z[i], True), True)
        c.append(acc)
    A = []
    for i in range(n):
        row = []
        for j in range(n):
            acc = Cy[i][j]
            for l in range(n):
                if p.R[l, i] != 0.0 and p.R[l, j] != 0.0:
                    acc = add(acc, scale(P(p.R[l, i]), p.R[l, j], True), True)
            acc = add(acc, sub(P(p.S[j, i]), P(p.S[i, j]), True), True)
            row.append(acc)
        A.append(row)
    return c, A


def Z_value(csp: QuadraticCsp, p: CertPoint, box=None, rigorous: bool = False) -> float:
    """Upper bound of ``y^T (F(x) - F(z))`` over ``box`` (default ``[p.u, p.v]``).

    The expression is evaluated exactly as parenthesized: the row vector
    ``c^T + (x - z)^T A`` is accumulated one term at a time per column, then
    multiplied by ``x - z`` and summed.
    """
    if box is None:
        lo, hi = p.u, p.v
    else:
        lo, hi = box.lo, box.hi
    n = csp.n
    c, A = _interval_coefficients(csp, p, rigorous)
    d = [sub(Interval(lo[i], hi[i]), Interval.point(p.z[i]), rigorous) for i in range(n)]
    total = None
    for j in range(n):
        g = c[j]
        for i in range(n):
            g = add(g, mul(d[i], A[i][j], rigorous), rigorous)
        term = mul(g, d[j], rigorous)
        total = term if total is None else add(total, term, rigorous)
    return total.hi


def Y_value(csp: QuadraticCsp, y, z, rigorous: bool = False) -> float:
    """``inf y^T (F - F(z))`` over the range box; ``-inf`` when unbounded."""
    y = np.asarray(y, dtype=float)
    z = np.asarray(z, dtype=float)
    if rigorous:
        from .interval import BoxVec
        Fz = eval_F_interval(csp, BoxVec.from_bounds(z, z), rigorous=True)
    else:
        Fz = eval_F(csp, z)
    total = Interval.point(0.0) if rigorous else 0.0
    for k in range(csp.m):
        if y[k] == 0.0:
            continue
        bound = csp.F_lo[k] if y[k] > 0 else csp.F_hi[k]
        if math.isinf(bound):
            return -math.inf
        if rigorous:
            total = add(total, scale(sub(Interval.point(bound), Fz[k], True), y[k], True), True)
        else:
            total += y[k] * (bound - Fz[k])
    return total.lo if rigorous else float(total)


def T_value(choice: TChoice, p: CertPoint) -> float:
    if choice.variant is TVariant.ONE:
        return 1.0
    t = float(np.linalg.norm(p.y))
    if t < choice.epsilon_zero:
        raise CertificateError("denominator zero set: |y| is below epsilon_zero")
    return t


def _combine(Z: float, Y: float, T: float) -> float:
    if Y == -math.inf:
        return math.inf
    return (Z - max(0.0, Y)) / T


def f_value(csp: QuadraticCsp, p: CertPoint, choice: TChoice = TChoice(), box=None,
            rigorous: bool = False) -> CertValue:
    T = T_value(choice, p)
    Y = Y_value(csp, p.y, p.z, rigorous)
    Z = Z_value(csp, p, box, rigorous)
    return CertValue(_combine(Z, Y, T), Z, Y, T)


def verify(csp: QuadraticCsp, p: CertPoint, choice: TChoice = TChoice()) -> bool:
    """Rigorous check that ``p`` certifies ``[p.u, p.v]`` infeasible."""
    if not (np.all(csp.x_lo <= p.u) and np.all(p.u <= p.z) and np.all(p.z <= p.v)
            and np.all(p.v <= csp.x_hi)):
        return False
    try:
        return f_value(csp, p, choice, rigorous=True).f < 0
    except CertificateError:
        return False


# --- float route with subgradients ------------------------------------------

def evaluate(csp: QuadraticCsp, p: CertPoint, choice: TChoice = TChoice(),
             need_grad: bool = True):
    """Certificate value and a subgradient with respect to all blocks.

    Returns ``(CertValue, grads)`` where ``grads`` maps block names
    ``y, z, R, S, u, v`` to arrays, or is ``None`` when not requested or when
    ``f`` is infinite.  At kinks the selection realised by the evaluation
    itself is differentiated.
    """
    y, z, R, S, u, v = p.y, p.z, p.R, p.S, p.u, p.v
    if choice.variant is TVariant.ONE:
        T = 1.0
    else:
        T = float(np.linalg.norm(y))
        if T < choice.epsilon_zero:
            raise CertificateError("denominator zero set: |y| is below epsilon_zero")

    Cy = C_of_y(csp, y)
    M = Cy + Cy.T
    c = y @ csp.c + M @ z
    A = Cy + R.T @ R + S.T - S
    dlo, dhi = u - z, v - z
    P, Q = A * dlo[:, None], A * dhi[:, None]
    lo_sel = P <= Q
    tlo = np.where(lo_sel, P, Q)
    thi = np.where(lo_sel, Q, P)
    glo = c + tlo.sum(axis=0)
    ghi = c + thi.sum(axis=0)
    prods = np.stack([glo * dlo, glo * dhi, ghi * dlo, ghi * dhi])
    idx = np.argmax(prods, axis=0)
    cols = np.arange(z.size)
    Z = float(prods[idx, cols].sum())

    Fz = eval_F(csp, z)
    pos = y >= 0
    bounds = np.where(pos, csp.F_lo, csp.F_hi)
    live = y != 0
    if np.any(live & np.isinf(bounds)):
        Y = -math.inf
    else:
        Y = float(np.sum(np.where(live, y * (np.where(live, bounds, 0.0) - Fz), 0.0)))
    f = _combine(Z, Y, T)
    value = CertValue(f, Z, Y, T)
    if not need_grad or not math.isfinite(f):
        return value, None

    # adjoints of Z
    ga_hi = idx >= 2
    db_hi = idx % 2 == 1
    ga = np.where(ga_hi, ghi, glo)
    db = np.where(db_hi, dhi, dlo)
    b_glo = np.where(ga_hi, 0.0, db)
    b_ghi = np.where(ga_hi, db, 0.0)
    b_dlo = np.where(db_hi, 0.0, ga)
    b_dhi = np.where(db_hi, ga, 0.0)
    b_c = b_glo + b_ghi
    # t_lo[i, j] = A[i, j] * (dlo_i if lo_sel else dhi_i); t_hi uses the other end
    d_for_lo = np.where(lo_sel, dlo[:, None], dhi[:, None])
    d_for_hi = np.where(lo_sel, dhi[:, None], dlo[:, None])
    b_A = d_for_lo * b_glo[None, :] + d_for_hi * b_ghi[None, :]
    GA_lo = A * b_glo[None, :]
    GA_hi = A * b_ghi[None, :]
    b_dlo = b_dlo + np.where(lo_sel, GA_lo, 0.0).sum(axis=1) + np.where(lo_sel, 0.0, GA_hi).sum(axis=1)
    b_dhi = b_dhi + np.where(lo_sel, 0.0, GA_lo).sum(axis=1) + np.where(lo_sel, GA_hi, 0.0).sum(axis=1)

    gZ_u = b_dlo
    gZ_v = b_dhi
    gZ_z = -(b_dlo + b_dhi) + M @ b_c
    b_Cy = b_A + np.outer(b_c, z) + np.outer(z, b_c)
    gZ_y = csp.c @ b_c + np.einsum("kij,ij->k", csp.C, b_Cy)
    gZ_R = np.triu(R @ (b_A + b_A.T))
    gZ_S = np.triu(b_A.T - b_A, 1)

    gy, gz = gZ_y, gZ_z
    if Y > 0:
        gy = gy - np.where(live, bounds - Fz, 0.0)
        gz = gz + (y @ csp.c + M @ z)
    grads = {"y": gy / T, "z": gz / T, "R": gZ_R / T, "S": gZ_S / T, "u": gZ_u / T, "v": gZ_v / T}
    if choice.variant is TVariant.NORM_Y:
        grads["y"] = grads["y"] - (f / T) * (y / T)
    return value, grads


def flatten_grad(p: CertPoint, grads: dict) -> np.ndarray:
    n = p.n
    parts = {
        "y": grads["y"], "z": grads["z"], "R": grads["R"][_triu(n, 0)],
        "S": grads["S"][_triu(n, 1)], "u": grads["u"], "v": grads["v"],
    }
    act = p._active()
    if not act:
        return np.zeros(0)
    return np.concatenate([parts[k] for k in act])


def f_subgradient(csp: QuadraticCsp, p: CertPoint, choice: TChoice = TChoice()) -> np.ndarray:
    """Subgradient of ``f`` over the active blocks of ``p`` (see :meth:`CertPoint.pack`)."""
    value, grads = evaluate(csp, p, choice)
    if grads is None:
        raise CertificateError("certificate is infinite at this point")
    return flatten_grad(p, grads)
