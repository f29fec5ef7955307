"""Primal active-set method for small dense convex QPs.

Solves  min 0.5 z'Hz + c'z  s.t.  E z = e,  G z <= h  from a feasible start.
H must be positive semidefinite. Used to polish points produced by the
outer-approximation LPs, whose quadratic optima are only approximate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class QpResult:
    z: np.ndarray
    objective: float
    optimal: bool
    iterations: int


def _null_space(A, n, tol=1e-10):
    if A.shape[0] == 0:
        return np.eye(n)
    _, s, vt = np.linalg.svd(A)
    rank = int((s > tol * max(1.0, s[0])).sum())
    return vt[rank:].T


def _independent(A_rows, a, tol=1e-9) -> bool:
    if not A_rows:
        return np.linalg.norm(a) > tol
    M = np.vstack(A_rows)
    coef, *_ = np.linalg.lstsq(M.T, a, rcond=None)
    return np.linalg.norm(M.T @ coef - a) > tol * max(1.0, np.linalg.norm(a))


def solve_convex_qp(H, c, E, e, G, h, z0, max_iter: int | None = None, tol: float = 1e-9) -> QpResult:
    H = np.asarray(H, float)
    c = np.asarray(c, float)
    n = c.size
    E = np.asarray(E, float).reshape(-1, n)
    G = np.asarray(G, float).reshape(-1, n)
    e = np.asarray(e, float)
    h = np.asarray(h, float)
    z = np.asarray(z0, float).copy()
    max_iter = max_iter or 10 * (n + G.shape[0]) + 50

    def obj(v):
        return float(0.5 * v @ H @ v + c @ v)

    eq_rows = []
    for i in range(E.shape[0]):
        if _independent(eq_rows, E[i]):
            eq_rows.append(E[i])
    work: list[int] = []
    slack = h - G @ z
    for i in np.flatnonzero(np.abs(slack) <= tol * (1.0 + np.abs(h))):
        if _independent(eq_rows + [G[k] for k in work], G[i]):
            work.append(int(i))

    for it in range(max_iter):
        A_w = np.vstack(eq_rows + [G[k] for k in work]) if (eq_rows or work) else np.zeros((0, n))
        g = H @ z + c
        Z = _null_space(A_w, n)
        p = np.zeros(n)
        newton = True
        if Z.shape[1]:
            gr = Z.T @ g
            Hr = Z.T @ H @ Z
            w, V = np.linalg.eigh(Hr)
            big = w > 1e-10 * max(1.0, abs(w).max(initial=0.0))
            flat = V[:, ~big]
            g_flat = flat.T @ gr
            if np.linalg.norm(g_flat) > tol * max(1.0, np.linalg.norm(g)):
                # zero curvature with descent: move until something blocks
                p = -Z @ (flat @ g_flat)
                newton = False
            else:
                y = V[:, big] @ ((V[:, big].T @ -gr) / w[big])
                p = Z @ y
        if np.linalg.norm(p) <= tol * max(1.0, np.linalg.norm(z)):
            if A_w.shape[0] == 0:
                return QpResult(z, obj(z), True, it)
            lam, *_ = np.linalg.lstsq(A_w.T, -g, rcond=None)
            lam_in = lam[len(eq_rows):]
            if lam_in.size == 0 or lam_in.min() >= -tol * max(1.0, np.abs(g).max()):
                return QpResult(z, obj(z), True, it)
            work.pop(int(np.argmin(lam_in)))
            continue
        Gp = G @ p
        slack = h - G @ z
        step = 1.0 if newton else np.inf
        block = -1
        for i in np.flatnonzero(Gp > tol * np.linalg.norm(p)):
            if i in work:
                continue
            a = max(slack[i], 0.0) / Gp[i]
            if a < step:
                step, block = a, int(i)
        if not np.isfinite(step):
            return QpResult(z, obj(z), False, it)  # unbounded along a flat direction
        z = z + step * p
        if block >= 0:
            work.append(block)
    return QpResult(z, obj(z), False, max_iter)
