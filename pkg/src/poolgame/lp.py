"""Dense bounded-variable primal simplex.

Rows are turned into equalities with one slack per row (``<=`` slack in
[0, inf), ``>=`` slack in (-inf, 0], ``==`` slack fixed at 0). Basic variables
that start outside their bounds are swapped for artificial columns, which are
driven to zero in phase 1. The same device handles cold starts (slack basis)
and warm starts from a supplied basis.

The basis inverse is kept explicitly, updated with a rank-one product-form
step per pivot and recomputed from an LU factorization every
``refactor_every`` pivots.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

LOWER, UPPER, BASIC, FREE = 0, 1, 2, 3
SENSE_CODE = {"<=": -1, "<": -1, "L": -1, ">=": 1, ">": 1, "G": 1, "==": 0, "=": 0, "E": 0}


class NumericalBreakdown(RuntimeError):
    pass


@dataclass
class LpOptions:
    feas_tol: float = 1e-9
    opt_tol: float = 1e-9
    pivot_tol: float = 1e-9
    breakdown_tol: float = 1e-11
    refactor_every: int = 50
    bland_after: int = 1000
    max_iter: int | None = None


@dataclass
class LpProblem:
    """min (or max) c.x + offset  s.t.  A x (senses) rhs,  lb <= x <= ub."""

    c: np.ndarray
    A: np.ndarray
    senses: np.ndarray
    rhs: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    sense: str = "min"
    offset: float = 0.0

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float)
        n = self.c.shape[0]
        self.A = np.asarray(self.A, dtype=float).reshape(-1, n)
        m = self.A.shape[0]
        s = np.asarray(self.senses)
        if s.dtype.kind in "US":
            s = np.array([SENSE_CODE[str(x)] for x in s], dtype=int)
        self.senses = s.astype(int).reshape(m)
        self.rhs = np.asarray(self.rhs, dtype=float).reshape(m)
        self.lb = np.asarray(self.lb, dtype=float).reshape(n)
        self.ub = np.asarray(self.ub, dtype=float).reshape(n)
        if np.any(self.lb > self.ub):
            raise ValueError("lp: lower bound above upper bound")

    @property
    def shape(self):
        return self.A.shape


@dataclass
class Basis:
    """Status per structural column then per row slack."""

    status: np.ndarray

    def compatible(self, n: int, m: int) -> bool:
        return self.status.shape[0] == n + m


@dataclass
class LpResult:
    status: str  # optimal | infeasible | unbounded
    x: np.ndarray | None = None
    objective: float | None = None
    duals: np.ndarray | None = None
    reduced_costs: np.ndarray | None = None
    basis: Basis | None = None
    ray: np.ndarray | None = None
    witness: dict = field(default_factory=dict)
    iterations: int = 0
    warm: bool = False


class _Simplex:
    def __init__(self, prob: LpProblem, opts: LpOptions):
        self.p = prob
        self.o = opts
        m, n = prob.A.shape
        self.m, self.n = m, n
        slack_lb = np.where(prob.senses == 1, -np.inf, 0.0)
        slack_ub = np.where(prob.senses == -1, np.inf, 0.0)
        self.M = np.hstack([prob.A, np.eye(m)])
        self.lb = np.concatenate([prob.lb, slack_lb])
        self.ub = np.concatenate([prob.ub, slack_ub])
        sgn = -1.0 if prob.sense == "max" else 1.0
        self.cost = np.concatenate([sgn * prob.c, np.zeros(m)])
        self.b = prob.rhs.copy()
        self.iters = 0
        self.max_iter = opts.max_iter or 50 * (m + n) + 1000

    # basis helpers
    def _nonbasic_value(self, j):
        lo, hi = self.lb[j], self.ub[j]
        if np.isfinite(lo):
            return lo, LOWER
        if np.isfinite(hi):
            return hi, UPPER
        return 0.0, FREE

    def _refactor(self):
        B = self.M[:, self.basic]
        try:
            self.Binv = np.linalg.inv(B)
        except np.linalg.LinAlgError as exc:
            raise NumericalBreakdown("singular basis at refactorization") from exc
        if not np.all(np.isfinite(self.Binv)):
            raise NumericalBreakdown("non-finite basis inverse")
        nb = np.ones(self.M.shape[1], dtype=bool)
        nb[self.basic] = False
        r = self.b - self.M[:, nb] @ self.xv[nb]
        self.xv[self.basic] = self.Binv @ r
        self.since_refactor = 0

    def _setup(self, basis: Basis | None):
        m = self.m
        N = self.M.shape[1]
        self.xv = np.zeros(N)
        self.stat = np.full(N, LOWER, dtype=int)
        warm = False
        if basis is not None and basis.compatible(self.n, m):
            st = basis.status.astype(int).copy()
            basic = np.flatnonzero(st == BASIC)
            if basic.shape[0] == m:
                try:
                    B = self.M[:, basic]
                    if np.linalg.cond(B) < 1e12:
                        warm = True
                except np.linalg.LinAlgError:
                    warm = False
            if warm:
                for j in range(N):
                    if st[j] == BASIC:
                        continue
                    if st[j] == UPPER and np.isfinite(self.ub[j]):
                        self.xv[j], st[j] = self.ub[j], UPPER
                    elif st[j] == LOWER and np.isfinite(self.lb[j]):
                        self.xv[j], st[j] = self.lb[j], LOWER
                    else:
                        self.xv[j], st[j] = self._nonbasic_value(j)
                self.stat = st
                self.basic = basic
        if not warm:
            for j in range(self.n):
                self.xv[j], self.stat[j] = self._nonbasic_value(j)
            self.basic = np.arange(self.n, self.n + m)
            self.stat[self.basic] = BASIC
        self._refactor()
        self.warm = warm
        self._install_artificials()

    def _install_artificials(self):
        """Swap out-of-bounds basics for artificial columns."""
        tol = self.o.feas_tol
        xb = self.xv[self.basic]
        lo, hi = self.lb[self.basic], self.ub[self.basic]
        below = xb < lo - tol
        above = xb > hi + tol
        bad = np.flatnonzero(below | above)
        self.n_art = bad.shape[0]
        self.art_rows = []
        if self.n_art == 0:
            return
        cols, vals = [], []
        for r in bad:
            j = self.basic[r]
            target = lo[r] if below[r] else hi[r]
            v = xb[r]
            sign = 1.0 if v > target else -1.0
            cols.append(sign * self.M[:, j])
            vals.append(abs(v - target))
            self.xv[j] = target
            self.stat[j] = LOWER if below[r] else UPPER
            if not np.isfinite(self.lb[j]) and not np.isfinite(self.ub[j]):
                self.stat[j] = FREE
            self.art_rows.append(r)
        base = self.M.shape[1]
        self.M = np.hstack([self.M, np.column_stack(cols)])
        self.lb = np.concatenate([self.lb, np.zeros(self.n_art)])
        self.ub = np.concatenate([self.ub, np.full(self.n_art, np.inf)])
        self.cost = np.concatenate([self.cost, np.zeros(self.n_art)])
        self.xv = np.concatenate([self.xv, np.array(vals)])
        self.stat = np.concatenate([self.stat, np.full(self.n_art, BASIC)])
        for k, r in enumerate(bad):
            self.basic[r] = base + k
            self.Binv[r, :] *= 1.0 if (xb[r] > (lo[r] if below[r] else hi[r])) else -1.0
        self.art_start = base

    # core iteration
    def _iterate(self, cost) -> str:
        o = self.o
        degenerate_run = 0
        bland = False
        while True:
            if self.iters >= self.max_iter:
                raise NumericalBreakdown("simplex iteration budget exhausted")
            if self.since_refactor >= o.refactor_every:
                self._refactor()
            y = cost[self.basic] @ self.Binv
            d = cost - y @ self.M
            st = self.stat
            fixed = self.lb == self.ub
            can_up = ((st == LOWER) | (st == FREE)) & ~fixed & (d < -o.opt_tol)
            can_dn = ((st == UPPER) | (st == FREE)) & ~fixed & (d > o.opt_tol)
            cand = can_up | can_dn
            if not cand.any():
                self.y, self.d = y, d
                return "optimal"
            if bland:
                q = int(np.flatnonzero(cand)[0])
            else:
                score = np.where(cand, np.abs(d), -1.0)
                q = int(np.argmax(score))
            s = 1.0 if can_up[q] else -1.0
            alpha = self.Binv @ self.M[:, q]
            theta, r, flip = self._ratio(alpha, q, s, bland)
            if theta == np.inf:
                self.y, self.d = y, d
                self.ray_q, self.ray_s, self.ray_alpha = q, s, alpha
                return "unbounded"
            degenerate_run = degenerate_run + 1 if theta <= 1e-12 else 0
            if degenerate_run >= o.bland_after:
                bland = True
            self.xv[q] += s * theta
            self.xv[self.basic] -= s * theta * alpha
            self.iters += 1
            if flip:
                self.stat[q] = UPPER if s > 0 else LOWER
                self.xv[q] = self.ub[q] if s > 0 else self.lb[q]
                continue
            piv = alpha[r]
            if abs(piv) < o.breakdown_tol:
                self._refactor()
                alpha = self.Binv @ self.M[:, q]
                piv = alpha[r]
                if abs(piv) < o.breakdown_tol:
                    raise NumericalBreakdown(f"pivot magnitude {abs(piv):.3e} below tolerance")
            leave = self.basic[r]
            dec = s * alpha[r] > 0
            if dec:
                self.xv[leave] = self.lb[leave]
                self.stat[leave] = LOWER
            else:
                self.xv[leave] = self.ub[leave]
                self.stat[leave] = UPPER
            if not np.isfinite(self.xv[leave]):
                self.xv[leave] = 0.0
                self.stat[leave] = FREE
            self.basic[r] = q
            self.stat[q] = BASIC
            row = self.Binv[r, :] / piv
            self.Binv -= np.outer(alpha, row)
            self.Binv[r, :] = row
            self.since_refactor += 1

    def _ratio(self, alpha, q, s, bland):
        o = self.o
        b = self.basic
        xb = self.xv[b]
        lo, hi = self.lb[b], self.ub[b]
        sa = s * alpha
        dec = sa > o.pivot_tol
        inc = sa < -o.pivot_tol
        with np.errstate(divide="ignore", invalid="ignore"):
            t_dec = np.where(dec & np.isfinite(lo), (xb - lo) / np.where(dec, sa, 1.0), np.inf)
            t_inc = np.where(inc & np.isfinite(hi), (hi - xb) / np.where(inc, -sa, 1.0), np.inf)
        t = np.maximum(np.minimum(t_dec, t_inc), 0.0)
        flip_len = self.ub[q] - self.lb[q]
        tmin = t.min() if t.size else np.inf
        if flip_len <= tmin:
            return (flip_len, -1, True) if np.isfinite(flip_len) else (np.inf, -1, False)
        if bland:
            ties = np.flatnonzero(t <= tmin + 1e-12)
            r = int(ties[np.argmin(b[ties])])
            return float(t[r]), r, False
        # Harris pass: relax bounds by the feasibility tolerance, then take
        # the largest pivot among rows that block within the relaxed step.
        tol = o.feas_tol
        with np.errstate(divide="ignore", invalid="ignore"):
            h_dec = np.where(dec & np.isfinite(lo), (xb - lo + tol) / np.where(dec, sa, 1.0), np.inf)
            h_inc = np.where(inc & np.isfinite(hi), (hi - xb + tol) / np.where(inc, -sa, 1.0), np.inf)
        hmax = max(np.minimum(h_dec, h_inc).min(), tmin)
        ok = np.flatnonzero(t <= hmax)
        r = int(ok[np.argmax(np.abs(alpha[ok]))])
        return float(t[r]), r, False

    def _drive_out_artificials(self):
        """Degenerate pivots replacing basic artificials (at zero) by real columns."""
        nm = self.n + self.m
        for r in range(self.m):
            if self.basic[r] < self.art_start:
                continue
            row = self.Binv[r, :] @ self.M[:, :nm]
            row[self.basic[self.basic < nm]] = 0.0
            row[self.lb[:nm] == self.ub[:nm]] *= 1e-3  # prefer columns that are not fixed
            j = int(np.argmax(np.abs(row)))
            if abs(row[j]) < 1e-7:
                continue  # redundant row; the artificial stays basic at zero
            alpha = self.Binv @ self.M[:, j]
            piv = alpha[r]
            rw = self.Binv[r, :] / piv
            self.Binv -= np.outer(alpha, rw)
            self.Binv[r, :] = rw
            self.stat[self.basic[r]] = LOWER
            self.basic[r] = j
            self.stat[j] = BASIC

    def run(self, basis: Basis | None) -> LpResult:
        self._setup(basis)
        o = self.o
        if self.n_art:
            c1 = np.zeros(self.M.shape[1])
            c1[self.art_start:] = 1.0
            st = self._iterate(c1)
            if st == "unbounded":  # cannot happen: phase-1 objective is bounded below
                raise NumericalBreakdown("phase 1 reported unbounded")
            infeas = float(self.xv[self.art_start:].sum())
            scale = 1.0 + float(np.abs(self.b).max(initial=0.0))
            if infeas > 1e-7 * scale:
                arts = np.flatnonzero(self.xv[self.art_start:] > 1e-9)
                rows = sorted(int(self.art_rows[k]) for k in arts)
                return LpResult("infeasible", witness={"rows": rows, "farkas": self.y[: self.m].copy(),
                                                       "infeasibility": infeas},
                                iterations=self.iters, warm=self.warm)
            # artificials leave the problem by fixing them at zero
            self.ub[self.art_start:] = 0.0
            self.xv[self.art_start:] = np.minimum(self.xv[self.art_start:], 0.0)
            self._drive_out_artificials()
            self._refactor()
        st = self._iterate(self.cost)
        nm = self.n + self.m
        if st == "unbounded":
            ray = np.zeros(self.M.shape[1])
            ray[self.ray_q] = self.ray_s
            ray[self.basic] = -self.ray_s * self.ray_alpha
            return LpResult("unbounded", ray=ray[: self.n], iterations=self.iters, warm=self.warm)
        x = np.clip(self.xv[: self.n], self.p.lb, self.p.ub)
        stat = self.stat[:nm].copy()
        if self.n_art and np.any(self.basic >= nm):
            basis_out = None
        else:
            basis_out = Basis(stat)
        sgn = -1.0 if self.p.sense == "max" else 1.0
        return LpResult("optimal", x=x, objective=float(self.p.c @ x + self.p.offset),
                        duals=sgn * self.y[: self.m], reduced_costs=sgn * self.d[: self.n],
                        basis=basis_out, iterations=self.iters, warm=self.warm)


def solve_lp(prob: LpProblem, options: LpOptions | None = None) -> LpResult:
    return _Simplex(prob, options or LpOptions()).run(None)


def solve_lp_warm(prob: LpProblem, basis: Basis | None, options: LpOptions | None = None) -> LpResult:
    """Start from ``basis``; an incompatible or singular basis falls back to the slack basis."""
    return _Simplex(prob, options or LpOptions()).run(basis)
