"""Starting points for the exclusion-box problems.

The construction follows the usual recipe: midpoint of the start box for
``z``, a sign rule for ``y`` that makes ``max(0, Y)`` positive, and ``R, S``
from a modified Cholesky factorization so that ``A(y, R, S)`` is positive
semidefinite at the start.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .certificate import C_of_y, CertPoint, OptMask, TChoice
from .model import QuadraticCsp, eval_F, is_feasible

__all__ = [
    "StartOptions",
    "Feasible",
    "Start",
    "initial_box",
    "initial_z",
    "initial_y",
    "build_S",
    "modified_cholesky",
    "starting_point",
]


@dataclass(frozen=True)
class StartOptions:
    strict_interior: bool = False
    t0: float = 0.1
    t1: float = 0.9
    r: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        if not 0 < self.t0 < self.t1 < 1:
            raise ValueError("need 0 < t0 < t1 < 1")


@dataclass(frozen=True)
class Feasible:
    point: np.ndarray


@dataclass(frozen=True)
class Start:
    point: CertPoint


def initial_box(lo, hi, opts: StartOptions = StartOptions()):
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    r = np.zeros_like(lo) if opts.r is None else np.broadcast_to(np.asarray(opts.r, dtype=float), lo.shape)
    if np.any(r < 0) or np.any(r > hi - lo):
        raise ValueError("r must satisfy 0 <= r <= x_hi - x_lo")
    if not opts.strict_interior:
        return lo.copy(), hi.copy()
    u0 = (1 - opts.t0) * lo + opts.t0 * (hi - r)
    v0 = (1 - opts.t1) * (lo + r) + opts.t1 * hi
    if np.any(u0 + r >= v0):
        raise ValueError("r too large: strict start box would violate u + r < v")
    return u0, v0


def initial_z(u0, v0) -> np.ndarray:
    return 0.5 * (np.asarray(u0, dtype=float) + np.asarray(v0, dtype=float))


def initial_y(Fz, F_lo, F_hi) -> np.ndarray:
    """Sign rule: push ``y_k`` toward the violated side of each range."""
    Fz = np.asarray(Fz, dtype=float)
    y = np.zeros(Fz.size)
    for k, (fk, lo, hi) in enumerate(zip(Fz, F_lo, F_hi)):
        if lo == -math.inf:
            y[k] = -1.0 if hi < fk else 0.0
        elif hi == math.inf:
            y[k] = 1.0 if fk < lo else 0.0
        elif fk < lo:
            y[k] = 1.0
        elif hi < fk:
            y[k] = -1.0
    return y


def build_S(Cy) -> np.ndarray:
    """``S = -1/2 triu(C(y)^T, 1)``, which symmetrizes ``C(y) + S^T - S``."""
    return -0.5 * np.triu(np.asarray(Cy, dtype=float).T, 1)


def modified_cholesky(Ahat, delta: Optional[float] = None):
    """Factor ``Ahat = Rhat^T Rhat - D`` with ``D`` diagonal and nonnegative.

    Plain Cholesky without pivoting.  A pivot below ``delta`` is raised, which
    shows up in ``D``; the raised value is also kept large enough that the
    entries of ``Rhat`` stay bounded by ``beta`` (Gill-Murray bound), so the
    factorization stays accurate for strongly indefinite input.  A matrix
    whose pivots all exceed ``delta`` gets ``D = 0``.
    """
    Ahat = np.asarray(Ahat, dtype=float)
    n = Ahat.shape[0]
    norm = float(np.abs(Ahat).sum(axis=1).max()) if n else 0.0
    if delta is None:
        delta = 1e-8 * max(1.0, norm)
    gamma = float(np.abs(np.diag(Ahat)).max()) if n else 0.0
    xi = float(np.abs(Ahat - np.diag(np.diag(Ahat))).max()) if n > 1 else 0.0
    beta2 = max(gamma, xi / math.sqrt(n * n - 1) if n > 1 else 0.0, np.finfo(float).eps)

    R = np.zeros((n, n))
    D = np.zeros(n)
    for j in range(n):
        p = Ahat[j, j] - R[:j, j] @ R[:j, j]
        row = Ahat[j, j + 1:] - R[:j, j] @ R[:j, j + 1:]
        if p < delta:
            theta = float(np.abs(row).max()) if row.size else 0.0
            raised = max(delta, theta * theta / beta2)
            D[j] = raised - p
            p = raised
        R[j, j] = math.sqrt(p)
        R[j, j + 1:] = row / R[j, j]
    return R, np.diag(D)


def starting_point(csp: QuadraticCsp, opts: StartOptions = StartOptions(),
                   choice: TChoice = TChoice(), *, lo=None, hi=None,
                   mask: OptMask = OptMask()):
    """Starting point over the box ``[lo, hi]`` (default: the CSP domain).

    Returns :class:`Feasible` when the box midpoint satisfies every
    constraint, otherwise :class:`Start` holding a complete point.
    """
    lo = csp.x_lo if lo is None else np.asarray(lo, dtype=float)
    hi = csp.x_hi if hi is None else np.asarray(hi, dtype=float)
    u0, v0 = initial_box(lo, hi, opts)
    z0 = initial_z(u0, v0)
    if is_feasible(csp, z0):
        return Feasible(z0)
    Fz = eval_F(csp, z0)
    y0 = initial_y(Fz, csp.F_lo, csp.F_hi)
    Cy = C_of_y(csp, y0)
    S = build_S(Cy)
    _, D = modified_cholesky(Cy + S.T - S)
    R = np.sqrt(D)
    return Start(CertPoint(y0, z0, R, S, u0, v0, mask))
