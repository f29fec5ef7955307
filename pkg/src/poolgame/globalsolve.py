"""Spatial branch-and-bound for bilinear models.

Each node solves an LP relaxation in which every bilinear product that
appears in a constraint gets an auxiliary column bounded by its McCormick
envelope on the node box. When the objective's quadratic part is convex (in
the minimization sense) it is split into squares of linear forms, each with an
epigraph variable and tangent cuts, which avoids branching on terms such as
``beta * q**2``.
"""

from __future__ import annotations

import dataclasses
import heapq
import itertools
import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .lp import BASIC, Basis, LpProblem, LpOptions, NumericalBreakdown, solve_lp_warm
from .qcqp import QcqpModel
from .qp import solve_convex_qp

OPTIMAL = "optimal"
GAP_LIMIT = "gap-limit"
TIME_LIMIT = "time-limit"
INFEASIBLE = "infeasible"
UNBOUNDED_BOX = "unbounded-box"


class SolverError(RuntimeError):
    status = "error"


class Infeasible(SolverError):
    status = INFEASIBLE


class UnboundedBox(SolverError):
    status = UNBOUNDED_BOX


class UnboundedBilinearVariable(UnboundedBox):
    pass


class NoBranchCandidate(SolverError):
    pass


@dataclass
class SolveOptions:
    rel_gap: float = 1e-4
    abs_gap: float = 1e-9
    time_limit: float | None = None
    node_limit: int = 200_000
    feas_tol: float = 1e-6
    heuristic_every: int = 5
    polish: bool = True
    fbbt: bool = True
    oa_rounds: int = 60
    start_points: list = field(default_factory=list)
    incumbent_callback: Callable | None = None


@dataclass
class SolveResult:
    status: str
    point: np.ndarray | None
    objective: float | None
    bound: float
    gap: float
    nodes: int
    time_s: float
    lp_iterations: int = 0
    hit_limit: bool = False

    @property
    def has_solution(self) -> bool:
        return self.point is not None


def mccormick_rows(xl, xu, yl, yu):
    """Four rows ``(cx, cy, cw, rhs)`` meaning ``cx*x + cy*y + cw*w <= rhs``
    for the envelope of ``w = x*y``."""
    return [
        (yl, xl, -1.0, xl * yl),
        (yu, xu, -1.0, xu * yu),
        (-yl, -xu, 1.0, -xu * yl),
        (-yu, -xl, 1.0, -xl * yu),
    ]


def _square_components(Q):
    """Write a PSD ``Q`` as ``sum_k lam_k (d_k . x)^2``; a diagonal Q keeps unit directions."""
    n = Q.shape[0]
    off = Q - np.diag(np.diag(Q))
    if not off.any():
        idx = np.flatnonzero(np.diag(Q) > 0.0)
        return np.eye(n)[idx], np.diag(Q)[idx].copy()
    lam, V = np.linalg.eigh(Q)
    keep = lam > 1e-12 * max(1.0, lam.max())
    return V[:, keep].T.copy(), lam[keep].copy()


class _Compiled:
    """Array form of a QcqpModel, always as a minimization."""

    def __init__(self, model: QcqpModel):
        n = model.n_vars
        self.n = n
        self.lb = np.array([v.lower for v in model.variables], dtype=float)
        self.ub = np.array([v.upper for v in model.variables], dtype=float)
        self.is_bin = np.array([v.is_binary for v in model.variables], dtype=bool)
        self.sign = -1.0 if model.sense == "max" else 1.0
        obj = model.objective.canonical()
        self.c = np.zeros(n)
        for i, v in obj.linear.terms.items():
            self.c[i] = self.sign * v
        self.c0 = self.sign * obj.constant
        oq = {k: self.sign * v for k, v in obj.quad.items() if v != 0.0}

        m = len(model.constraints)
        self.m = m
        self.A = np.zeros((m, n))
        self.senses = np.zeros(m, dtype=int)
        self.rhs = np.zeros(m)
        pairs: dict[tuple[int, int], int] = {}
        row_terms = []
        for r, con in enumerate(model.constraints):
            for i, v in con.body.linear.terms.items():
                self.A[r, i] += v
            self.senses[r] = {"<=": -1, ">=": 1, "==": 0}[con.sense]
            self.rhs[r] = con.rhs
            for k, v in con.body.quad.items():
                if v != 0.0:
                    row_terms.append((r, pairs.setdefault(k, len(pairs)), v))
        self.linear_rows = np.ones(m, dtype=bool)
        for r, _, _ in row_terms:
            self.linear_rows[r] = False

        # convex objective -> outer approximation; otherwise lift its terms too
        self.Q = None
        self.qdir = np.zeros((0, n))
        self.qlam = np.zeros(0)
        self.obj_pairs: list[tuple[int, float]] = []
        if oq:
            Q = np.zeros((n, n))
            for (a, b), v in oq.items():
                if a == b:
                    Q[a, a] += v
                else:
                    Q[a, b] += 0.5 * v
                    Q[b, a] += 0.5 * v
            idx = sorted({i for k in oq for i in k})
            sub = Q[np.ix_(idx, idx)]
            eig = np.linalg.eigvalsh(sub)
            if eig.min() >= -1e-9 * max(1.0, abs(eig).max()):
                self.Q = Q
                self.qdir, self.qlam = _square_components(Q)
            else:
                for k, v in oq.items():
                    self.obj_pairs.append((pairs.setdefault(k, len(pairs)), v))
        self.oq = oq
        self.pairs = list(pairs)
        self.pa = np.array([a for a, _ in self.pairs], dtype=int)
        self.pb = np.array([b for _, b in self.pairs], dtype=int)
        self.row_terms = row_terms
        self.rt_row = np.array([r for r, _, _ in row_terms], dtype=int)
        self.rt_pair = np.array([k for _, k, _ in row_terms], dtype=int)
        self.rt_coef = np.array([v for _, _, v in row_terms], dtype=float)
        # which variables participate in lifted products
        self.bilinear_vars = sorted({i for p in self.pairs for i in p})
        self.covers = self._covers()

    def _covers(self):
        """Two variable sets whose fixing makes every lifted product linear."""
        edges = [p for p in self.pairs]
        uncovered = set(range(len(edges)))
        cover: set[int] = set()
        for a, b in edges:
            if a == b:
                cover.add(a)
        uncovered = {k for k in uncovered if edges[k][0] not in cover and edges[k][1] not in cover}
        while uncovered:
            count: dict[int, int] = {}
            for k in uncovered:
                for v in set(edges[k]):
                    count[v] = count.get(v, 0) + 1
            best = max(count.items(), key=lambda kv: (kv[1], -kv[0]))[0]
            cover.add(best)
            uncovered = {k for k in uncovered if best not in edges[k]}
        other = set(self.bilinear_vars) - cover
        out = [np.array(sorted(cover), dtype=int)]
        if other and all(a in other or b in other for a, b in edges):
            out.append(np.array(sorted(other), dtype=int))
        return out

    # evaluation in the original (minimization) form
    def objective(self, x) -> float:
        v = self.c0 + self.c @ x
        for (a, b), q in self.oq.items():
            v += q * x[a] * x[b]
        return float(v)

    def row_activity(self, x):
        act = self.A @ x
        if self.row_terms:
            prod = x[self.pa] * x[self.pb]
            np.add.at(act, self.rt_row, self.rt_coef * prod[self.rt_pair])
        return act

    def violation(self, x, tol) -> float:
        act = self.row_activity(x)
        d = act - self.rhs
        viol = np.where(self.senses == -1, np.maximum(d, 0.0),
                        np.where(self.senses == 1, np.maximum(-d, 0.0), np.abs(d)))
        scaled = viol / (1.0 + np.abs(self.rhs))
        bnd = np.maximum(np.maximum(self.lb - x, x - self.ub), 0.0)
        worst = max(scaled.max(initial=0.0), bnd.max(initial=0.0))
        if self.is_bin.any():
            xb = x[self.is_bin]
            worst = max(worst, np.abs(xb - np.round(xb)).max())
        return float(worst)


class _Node:
    __slots__ = ("lb", "ub", "bound", "depth", "basis", "id")

    def __init__(self, lb, ub, bound, depth, basis, nid):
        self.lb, self.ub, self.bound, self.depth, self.basis, self.id = lb, ub, bound, depth, basis, nid


def _fbbt(cm: _Compiled, lb, ub, passes=10):
    """Interval propagation over the purely linear rows."""
    rows = np.flatnonzero(cm.linear_rows)
    if rows.size == 0:
        return lb, ub, True
    A = cm.A[rows]
    rhs = cm.rhs[rows]
    sen = cm.senses[rows]
    lb, ub = lb.copy(), ub.copy()
    for _ in range(passes):
        changed = False
        for r in range(A.shape[0]):
            a = A[r]
            nz = np.flatnonzero(a)
            if nz.size == 0:
                continue
            an = a[nz]
            lo_t = np.where(an > 0, an * lb[nz], an * ub[nz])
            hi_t = np.where(an > 0, an * ub[nz], an * lb[nz])
            lo_inf = ~np.isfinite(lo_t)
            hi_inf = ~np.isfinite(hi_t)
            lo_sum = lo_t[~lo_inf].sum()
            hi_sum = hi_t[~hi_inf].sum()
            n_lo_inf, n_hi_inf = lo_inf.sum(), hi_inf.sum()
            for k, j in enumerate(nz):
                aj = an[k]
                # upper limit on a_j x_j from  sum a x <= rhs
                if sen[r] <= 0:
                    if n_lo_inf == 0 or (n_lo_inf == 1 and lo_inf[k]):
                        rest = lo_sum - (0.0 if lo_inf[k] else lo_t[k])
                        cap = rhs[r] - rest
                        if aj > 0:
                            nu = cap / aj
                            if nu < ub[j] - 1e-9:
                                ub[j], changed = nu, True
                        else:
                            nl = cap / aj
                            if nl > lb[j] + 1e-9:
                                lb[j], changed = nl, True
                if sen[r] >= 0:
                    if n_hi_inf == 0 or (n_hi_inf == 1 and hi_inf[k]):
                        rest = hi_sum - (0.0 if hi_inf[k] else hi_t[k])
                        floor = rhs[r] - rest
                        if aj > 0:
                            nl = floor / aj
                            if nl > lb[j] + 1e-9:
                                lb[j], changed = nl, True
                        else:
                            nu = floor / aj
                            if nu < ub[j] - 1e-9:
                                ub[j], changed = nu, True
        bi = cm.is_bin
        lb[bi] = np.ceil(lb[bi] - 1e-9)
        ub[bi] = np.floor(ub[bi] + 1e-9)
        if np.any(lb > ub + 1e-7):
            return lb, ub, False
        ub = np.maximum(ub, lb)
        if not changed:
            break
    return lb, ub, True


def build_relaxation(model: QcqpModel, lb=None, ub=None) -> LpProblem:
    """LP relaxation of ``model`` on the box ``[lb, ub]`` (model bounds by default).

    Columns are the model variables followed by one auxiliary per distinct
    product; when the objective's quadratic part is convex one epigraph column
    per square component follows, each with a tangent at the box midpoint.
    """
    cm = _Compiled(model)
    lb = cm.lb if lb is None else np.asarray(lb, float)
    ub = cm.ub if ub is None else np.asarray(ub, float)
    relax = _Relaxation(cm)
    cuts = []
    if cm.Q is not None:
        mid = np.where(np.isfinite(lb) & np.isfinite(ub), 0.5 * (lb + ub), np.clip(0.0, lb, ub))
        cuts.extend(relax.tangents(mid))
    return relax.lp(lb, ub, cuts)


class _Relaxation:
    def __init__(self, cm: _Compiled):
        self.cm = cm
        n, p = cm.n, len(cm.pairs)
        self.has_t = cm.Q is not None
        self.k = cm.qlam.shape[0]
        self.ncols = n + p + self.k
        self.p = p
        base = np.zeros((cm.m, self.ncols))
        base[:, :n] = cm.A
        if cm.row_terms:
            np.add.at(base, (cm.rt_row, n + cm.rt_pair), cm.rt_coef)
        self.base = base
        c = np.zeros(self.ncols)
        c[:n] = cm.c
        for k, v in cm.obj_pairs:
            c[n + k] += v
        c[n + p:] = 1.0
        self.cost = c

    def square_gaps(self, xfull):
        """True square value minus its epigraph column, per component."""
        cm = self.cm
        y = cm.qdir @ xfull[: cm.n]
        return cm.qlam * y * y - xfull[self.ncols - self.k:]

    def tangents(self, x0, which=None):
        """Rows ``(coefs, rhs)`` for  t_k >= lam_k (2 y0 y - y0^2)  with  y = d_k . x."""
        cm = self.cm
        which = range(self.k) if which is None else which
        y0 = cm.qdir @ x0[: cm.n]
        rows = []
        for k in which:
            row = np.zeros(self.ncols)
            row[: cm.n] = 2.0 * cm.qlam[k] * y0[k] * cm.qdir[k]
            row[self.ncols - self.k + k] = -1.0
            rows.append((row, float(cm.qlam[k] * y0[k] ** 2)))
        return rows

    def lp(self, lb, ub, cuts) -> LpProblem:
        cm = self.cm
        n, p = cm.n, self.p
        for j in cm.bilinear_vars:
            if not (math.isfinite(lb[j]) and math.isfinite(ub[j])):
                raise UnboundedBilinearVariable(f"variable {j} appears in a product but has an infinite bound")
        blocks = [self.base]
        sen = [cm.senses]
        rhs = [cm.rhs]
        col_lb = np.empty(self.ncols)
        col_ub = np.empty(self.ncols)
        col_lb[:n], col_ub[:n] = lb, ub
        if p:
            xl, xu, yl, yu = lb[cm.pa], ub[cm.pa], lb[cm.pb], ub[cm.pb]
            corners = np.stack([xl * yl, xl * yu, xu * yl, xu * yu])
            wl, wu = corners.min(axis=0), corners.max(axis=0)
            sq = cm.pa == cm.pb
            wl = np.where(sq & (xl <= 0) & (xu >= 0), 0.0, wl)
            col_lb[n:n + p], col_ub[n:n + p] = wl, wu
            M = np.zeros((4 * p, self.ncols))
            rr = np.arange(p) * 4
            ks = np.arange(p)
            r_rhs = np.empty(4 * p)
            for t, (cx, cy, cw, rv) in enumerate(mccormick_rows(xl, xu, yl, yu)):
                np.add.at(M, (rr + t, cm.pa), cx)
                np.add.at(M, (rr + t, cm.pb), cy)
                M[rr + t, n + ks] = cw
                r_rhs[rr + t] = rv
            blocks.append(M)
            sen.append(np.full(4 * p, -1))
            rhs.append(r_rhs)
        if self.k:
            col_lb[n + p:], col_ub[n + p:] = 0.0, np.inf
        if cuts:
            blocks.append(np.array([r for r, _ in cuts]))
            sen.append(np.full(len(cuts), -1))
            rhs.append(np.array([v for _, v in cuts]))
        return LpProblem(self.cost, np.vstack(blocks), np.concatenate(sen), np.concatenate(rhs),
                         col_lb, col_ub, "min", cm.c0)


class _BranchAndBound:
    def __init__(self, model: QcqpModel, opts: SolveOptions):
        model.freeze()
        self.model = model
        self.o = opts
        self.cm = _Compiled(model)
        self.rel = _Relaxation(self.cm)
        self.cuts: list = []
        self.inc_x = None
        self.inc_val = math.inf
        self.lp_iters = 0
        self.t0 = time.perf_counter()
        self.lp_opts = LpOptions()

    # LP with outer-approximation rounds
    def _solve_node_lp(self, lb, ub, basis):
        cm = self.cm
        for _ in range(self.o.oa_rounds + 1):
            prob = self.rel.lp(lb, ub, self.cuts)
            if basis is not None:
                # cuts added since this basis was saved enter with basic slacks
                missing = prob.A.shape[0] + prob.A.shape[1] - basis.status.shape[0]
                if missing > 0:
                    basis = Basis(np.concatenate([basis.status, np.full(missing, BASIC)]))
            try:
                res = solve_lp_warm(prob, basis, self.lp_opts)
            except NumericalBreakdown:
                res = solve_lp_warm(prob, None, self.lp_opts)
            self.lp_iters += res.iterations
            if res.status != "optimal":
                return res, None
            basis = res.basis
            if not self.rel.has_t:
                return res, basis
            gaps = self.rel.square_gaps(res.x)
            # the bound stays valid whenever we stop; a fraction of the target gap is enough
            tol = max(0.1 * self.o.abs_gap, 0.1 * self.o.rel_gap * max(1.0, abs(res.objective)),
                      1e-9 * (1.0 + abs(res.objective)))
            if gaps.sum() <= tol:
                return res, basis
            self.cuts.extend(self.rel.tangents(res.x, np.flatnonzero(gaps > tol / self.rel.k)))
        return res, basis

    def _elapsed(self):
        return time.perf_counter() - self.t0

    def _try_incumbent(self, x) -> bool:
        cm = self.cm
        x = np.clip(x, cm.lb, cm.ub)
        x[cm.is_bin] = np.round(x[cm.is_bin])
        if cm.violation(x, self.o.feas_tol) > self.o.feas_tol:
            return False
        val = cm.objective(x)
        if val < self.inc_val - 1e-12 * (1 + abs(val)):
            self.inc_val, self.inc_x = val, x.copy()
            if self.o.incumbent_callback is not None:
                self.o.incumbent_callback(x.copy(), cm.sign * val)
            return True
        return False

    def _fixed_solve(self, lb, ub, fix_idx, values):
        """LP over the box with ``fix_idx`` pinned; products through them become exact."""
        cm = self.cm
        lb2, ub2 = lb.copy(), ub.copy()
        v = np.clip(values[fix_idx], lb[fix_idx], ub[fix_idx])
        lb2[fix_idx] = v
        ub2[fix_idx] = v
        bi = np.flatnonzero(cm.is_bin)
        if bi.size:
            r = np.clip(np.round(values[bi]), lb[bi], ub[bi])
            lb2[bi] = r
            ub2[bi] = r
        try:
            res, _ = self._solve_node_lp(lb2, ub2, None)
        except (NumericalBreakdown, UnboundedBox):
            return None
        if res.status != "optimal":
            return None
        return res.x[: cm.n]

    def _qp_polish(self, lb, ub, fix_idx, x):
        """Exact convex QP over the face where ``fix_idx`` is pinned at ``x``.

        The tangent cuts only approximate a quadratic optimum, so flows read
        off the LP can be off by the square root of the cut tolerance.
        """
        cm = self.cm
        if not self.rel.has_t:
            return None
        lb2, ub2 = lb.copy(), ub.copy()
        v = np.clip(x[fix_idx], lb[fix_idx], ub[fix_idx])
        lb2[fix_idx] = ub2[fix_idx] = v
        bi = np.flatnonzero(cm.is_bin)
        if bi.size:
            lb2[bi] = ub2[bi] = np.clip(np.round(x[bi]), lb[bi], ub[bi])
        prob = self.rel.lp(lb2, ub2, [])
        k = self.rel.ncols - self.rel.k
        A, sen, rhs = prob.A[:, :k], np.asarray(prob.senses), prob.rhs
        clb, cub = prob.lb[:k], prob.ub[:k]
        fixed = clb == cub
        E = [A[sen == 0]]
        e = [rhs[sen == 0]]
        G = [A[sen == -1], -A[sen == 1]]
        h = [rhs[sen == -1], -rhs[sen == 1]]
        eye = np.eye(k)
        E.append(eye[fixed])
        e.append(clb[fixed])
        up = np.isfinite(cub) & ~fixed
        lo = np.isfinite(clb) & ~fixed
        G += [eye[up], -eye[lo]]
        h += [cub[up], -clb[lo]]
        H = np.zeros((k, k))
        H[: cm.n, : cm.n] = 2.0 * cm.Q
        z0 = np.zeros(k)
        z0[: cm.n] = np.clip(x, lb2, ub2)
        if self.rel.p:
            z0[cm.n:] = z0[cm.pa] * z0[cm.pb]
        res = solve_convex_qp(H, prob.c[:k], np.vstack(E), np.concatenate(e), np.vstack(G), np.concatenate(h), z0)
        y = res.z[: cm.n]
        self._try_incumbent(y)
        return y

    def _final_polish(self):
        if not self.rel.has_t or self.inc_x is None:
            return
        cm = self.cm
        covers = cm.covers if cm.covers and cm.covers[0].size else [np.array([], dtype=int)]
        for _ in range(4):
            before = self.inc_val
            for cov in covers:
                self._qp_polish(cm.lb, cm.ub, cov, self.inc_x)
            if self.inc_val >= before - 1e-12 * (1.0 + abs(before)):
                break

    def _heuristic(self, lb, ub, x):
        cm = self.cm
        if not cm.covers or cm.covers[0].size == 0:
            if cm.is_bin.any():
                y = self._fixed_solve(lb, ub, np.array([], dtype=int), x)
                if y is not None:
                    self._try_incumbent(y)
            return
        y = self._fixed_solve(lb, ub, cm.covers[0], x)
        if y is not None:
            self._try_incumbent(y)
            if self.o.polish:
                self._polish(lb, ub, y)

    def _polish(self, lb, ub, x):
        """Block coordinate descent: alternately re-optimize with one cover fixed."""
        cm = self.cm
        best = cm.objective(x) if cm.violation(x, self.o.feas_tol) <= self.o.feas_tol else math.inf
        for _ in range(8):
            improved = False
            for cov in cm.covers[::-1]:
                y = self._fixed_solve(lb, ub, cov, x)
                if y is None or cm.violation(y, self.o.feas_tol) > self.o.feas_tol:
                    continue
                val = cm.objective(y)
                if val < best - 1e-9 * (1 + abs(best)):
                    best, x, improved = val, y, True
                    self._try_incumbent(y)
            if not improved:
                break

    def _branch_var(self, lb, ub, xfull):
        cm = self.cm
        n = cm.n
        x = xfull[:n]
        bi = np.flatnonzero(cm.is_bin & (ub - lb > 0.5))
        if bi.size:
            frac = np.abs(x[bi] - np.round(x[bi]))
            k = int(np.argmax(frac))
            if frac[k] > 1e-6:
                return int(bi[k]), 0.5
        if not cm.pairs:
            return None
        w = xfull[n:n + len(cm.pairs)]
        viol = np.abs(w - x[cm.pa] * x[cm.pb])
        score = np.zeros(n)
        np.add.at(score, cm.pa, viol)
        np.add.at(score, cm.pb, np.where(cm.pa == cm.pb, 0.0, viol))
        width = ub - lb
        score[width <= 1e-9 * (1.0 + np.abs(ub))] = 0.0
        score[cm.is_bin] = 0.0
        j = int(np.argmax(score))
        if score[j] <= 1e-10:
            return None
        val = min(max(x[j], lb[j] + 0.2 * width[j]), ub[j] - 0.2 * width[j])
        return j, val

    def _gap_ok(self, bound):
        if self.inc_x is None or not math.isfinite(bound):
            return False
        gap = self.inc_val - bound
        return gap <= max(self.o.abs_gap, self.o.rel_gap * max(1.0, abs(bound)))

    def _prunable(self, bound):
        # a node whose bound is within tolerance of the incumbent cannot improve it
        if self.inc_x is None or not math.isfinite(bound):
            return False
        return bound >= self.inc_val - max(self.o.abs_gap, self.o.rel_gap * max(1.0, abs(bound)))

    def run(self) -> SolveResult:
        cm, o = self.cm, self.o
        lb, ub = cm.lb.copy(), cm.ub.copy()
        if o.fbbt:
            lb, ub, ok = _fbbt(cm, lb, ub)
            if not ok:
                raise Infeasible("bound propagation proved the model infeasible")
        for j in cm.bilinear_vars:
            if not (math.isfinite(lb[j]) and math.isfinite(ub[j])):
                raise UnboundedBilinearVariable(
                    f"variable {self.model.variables[j].name} appears in a product but is unbounded")
        for sp in o.start_points:
            self._try_incumbent(np.asarray(sp, dtype=float))
        if self.rel.has_t:
            mid = np.where(np.isfinite(lb) & np.isfinite(ub), 0.5 * (lb + ub), np.clip(0.0, lb, ub))
            self.cuts.extend(self.rel.tangents(mid))

        counter = itertools.count()
        root = _Node(lb, ub, -math.inf, 0, None, next(counter))
        stack = [root]
        heap: list = []
        lost = math.inf
        nodes = 0
        status = OPTIMAL
        while stack or heap:
            open_bounds = [nd.bound for nd in stack] + [h[0] for h in heap]
            bound = min(min(open_bounds), lost)
            if self._gap_ok(bound):
                break
            if nodes >= o.node_limit:
                status = GAP_LIMIT
                break
            if o.time_limit is not None and self._elapsed() > o.time_limit:
                status = TIME_LIMIT
                break
            if stack:
                node = stack.pop()
            else:
                _, _, node = heapq.heappop(heap)
            if self._prunable(node.bound):
                continue
            nodes += 1
            try:
                res, basis = self._solve_node_lp(node.lb, node.ub, node.basis)
            except NumericalBreakdown:
                lost = min(lost, node.bound)
                continue
            if res.status == "infeasible":
                continue
            if res.status == "unbounded":
                if node.depth == 0:
                    raise UnboundedBox("LP relaxation is unbounded; the model needs finite boxes")
                lost = min(lost, node.bound)
                continue
            nb = max(node.bound, res.objective)
            xfull = res.x
            x = xfull[: cm.n]
            self._try_incumbent(x.copy())
            if self._prunable(nb):
                continue
            if node.depth == 0 or self.inc_x is None or (o.heuristic_every and nodes % o.heuristic_every == 0):
                self._heuristic(node.lb, node.ub, x)
                if self._prunable(nb):
                    continue
            br = self._branch_var(node.lb, node.ub, xfull)
            if br is None:
                # envelope exact and integral: the relaxation point is the node optimum
                if not self._try_incumbent(x.copy()) and cm.violation(x, o.feas_tol) > o.feas_tol:
                    lost = min(lost, nb)
                continue
            j, val = br
            lo_ub, hi_lb = node.ub.copy(), node.lb.copy()
            if cm.is_bin[j]:
                lo_ub[j], hi_lb[j] = 0.0, 1.0
            else:
                lo_ub[j], hi_lb[j] = val, val
            kids = [_Node(node.lb, lo_ub, nb, node.depth + 1, basis, next(counter)),
                    _Node(hi_lb, node.ub, nb, node.depth + 1, basis, next(counter))]
            if self.inc_x is None:
                # plunge towards the side holding the relaxation value last, so it pops first
                if x[j] - node.lb[j] > node.ub[j] - x[j]:
                    stack.extend(kids)
                else:
                    stack.extend(kids[::-1])
            else:
                for k in kids:
                    heapq.heappush(heap, (k.bound, k.id, k))
            if self.inc_x is not None and stack:
                for k in stack:
                    heapq.heappush(heap, (k.bound, k.id, k))
                stack = []

        self._final_polish()
        open_bounds = [nd.bound for nd in stack] + [h[0] for h in heap]
        bound = min(open_bounds + [lost]) if (open_bounds or lost < math.inf) else self.inc_val
        if self.inc_x is None:
            if status == OPTIMAL:
                raise Infeasible("search exhausted without a feasible point")
            return SolveResult(status, None, None, cm.sign * bound, math.inf, nodes, self._elapsed(),
                               self.lp_iters, hit_limit=True)
        bound = min(bound, self.inc_val)
        gap = self.inc_val - bound
        if status == OPTIMAL and not self._gap_ok(bound) and (stack or heap):
            status = GAP_LIMIT
        return SolveResult(status, self.inc_x.copy(), cm.sign * self.inc_val, cm.sign * bound, gap, nodes,
                           self._elapsed(), self.lp_iters, hit_limit=status in (GAP_LIMIT, TIME_LIMIT))


def solve_global(model: QcqpModel, options: SolveOptions | None = None, **kw) -> SolveResult:
    """Globally solve ``model``.

    Raises :class:`Infeasible` when infeasibility is proven and
    :class:`UnboundedBox` when a product involves an unbounded variable or the
    root relaxation is unbounded.
    """
    opts = dataclasses.replace(options or SolveOptions(), **kw)
    return _BranchAndBound(model, opts).run()
