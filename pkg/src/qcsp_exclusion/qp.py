"""Small dense convex QP by a primal active-set method.

Solves ``min 1/2 w^T H w + q^T w  s.t.  G w <= h`` from a feasible start.
``H`` only needs to be positive semidefinite: when the reduced Hessian is
singular along a descent direction the method moves along that ray until a
constraint blocks it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["QPError", "QPResult", "solve_qp"]


class QPError(RuntimeError):
    pass


@dataclass
class QPResult:
    w: np.ndarray
    lam: np.ndarray
    iterations: int
    active: list


def _independent(rows: np.ndarray, cand: np.ndarray, tol: float = 1e-10) -> bool:
    if rows.shape[0] == 0:
        return bool(np.linalg.norm(cand) > tol)
    M = np.vstack([rows, cand])
    s = np.linalg.svd(M, compute_uv=False)
    return bool(s[-1] > tol * max(1.0, s[0]))


def solve_qp(H, q, G, h, w0, max_iter: int = 1000, tol: float = 1e-11) -> QPResult:
    H = np.asarray(H, dtype=float)
    q = np.asarray(q, dtype=float)
    G = np.asarray(G, dtype=float).reshape(-1, q.size)
    h = np.asarray(h, dtype=float)
    w = np.array(w0, dtype=float)
    nvar = w.size
    ncon = G.shape[0]
    scale = 1.0 + np.abs(h)

    slack = h - G @ w
    if np.any(slack < -1e-8 * scale):
        raise QPError("starting point is infeasible")

    work: list[int] = []
    for i in np.argsort(slack):
        if slack[i] > 1e-12 * scale[i] or len(work) >= nvar:
            break
        if _independent(G[work], G[i]):
            work.append(int(i))

    lam = np.zeros(ncon)
    for it in range(max_iter):
        grad = H @ w + q
        AW = G[work]
        k = len(work)
        if k:
            Qm, _ = np.linalg.qr(AW.T, mode="complete")
            Z = Qm[:, k:]
        else:
            Z = np.eye(nvar)

        step_cap = 1.0
        if Z.shape[1] == 0:
            p = np.zeros(nvar)
        else:
            Hr = Z.T @ H @ Z
            gr = Z.T @ grad
            vals, vecs = np.linalg.eigh(Hr)
            flat = vals <= 1e-12 * max(1.0, float(np.abs(vals).max()))
            g_flat = vecs[:, flat].T @ gr
            if g_flat.size and np.linalg.norm(g_flat) > tol * max(1.0, np.linalg.norm(grad)):
                p = -Z @ (vecs[:, flat] @ g_flat)
                step_cap = np.inf
            else:
                curved = ~flat
                coef = (vecs[:, curved].T @ gr) / vals[curved]
                p = -Z @ (vecs[:, curved] @ coef)

        if np.linalg.norm(p) <= tol * max(1.0, np.linalg.norm(w)):
            lam = np.zeros(ncon)
            if k:
                lw, *_ = np.linalg.lstsq(AW.T, -grad, rcond=None)
                lam[work] = lw
                j = int(np.argmin(lw))
                if lw[j] < -1e-10 * max(1.0, np.abs(lw).max()):
                    work.pop(j)
                    continue
                lam = np.maximum(lam, 0.0)
            return QPResult(w, lam, it + 1, list(work))

        Gp = G @ p
        alpha, block = step_cap, -1
        for i in range(ncon):
            if i in work or Gp[i] <= 1e-14 * np.linalg.norm(p) * max(1.0, np.linalg.norm(G[i])):
                continue
            a = max(0.0, (h[i] - G[i] @ w) / Gp[i])
            if a < alpha:
                alpha, block = a, i
        if not np.isfinite(alpha):
            raise QPError("quadratic program is unbounded below")
        w = w + alpha * p
        if block >= 0:
            work.append(block)
    raise QPError("active-set iteration limit reached")
