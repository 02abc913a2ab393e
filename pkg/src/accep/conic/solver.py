"""Solve a :class:`ConvexProgram` and verify candidate points against it."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from accep.conic.ipm import Cones, solve_conic
from accep.conic.program import ConvexProgram

log = logging.getLogger(__name__)

STATUSES = ("optimal", "infeasible", "unbounded", "iteration-limit", "numerical-failure")
DEFAULT_TOL = 1e-6


@dataclass
class Solution:
    status: str
    x: np.ndarray
    objective: float
    dual_objective: float
    y_eq: np.ndarray  # multipliers of equality rows
    z_le: np.ndarray  # multipliers of <= rows (>= rows were negated), nonnegative
    z_soc: list[np.ndarray]
    z_lb: np.ndarray
    z_ub: np.ndarray
    primal_residual: float
    dual_residual: float
    gap: float
    iterations: int
    backend: str = "ipm"
    eq_tags: list = field(default_factory=list)
    le_tags: list = field(default_factory=list)

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"

    def value(self, idx) -> np.ndarray:
        idx = np.asarray(idx)
        out = np.where(idx >= 0, self.x[np.maximum(idx, 0)], 0.0)
        return out

    def duals(self, tag: str) -> np.ndarray:
        parts = [self.y_eq[a:b] for t, a, b in self.eq_tags if t == tag]
        parts += [self.z_le[a:b] for t, a, b in self.le_tags if t == tag]
        return np.concatenate(parts) if parts else np.zeros(0)


class SolverError(RuntimeError):
    def __init__(self, status: str, message: str = ""):
        super().__init__(message or status)
        self.status = status


# -- standard form -------------------------------------------------------

@dataclass
class _Standard:
    c: np.ndarray
    A: sp.csr_matrix
    b: np.ndarray
    G: sp.csr_matrix
    h: np.ndarray
    cones: Cones
    free: np.ndarray  # kept variable indices
    x_fixed: np.ndarray  # full-length vector with fixed values filled in
    const: float
    # row bookkeeping to map duals back
    eq_keep: np.ndarray
    le_keep: np.ndarray
    lb_rows: np.ndarray  # variable index per lower-bound row
    ub_rows: np.ndarray
    soc_order: list[tuple[int, int]]  # (block index, dim) in emitted order
    infeasible_rows: list[str]


def _standard_form(prog: ConvexProgram, tol: float) -> _Standard:
    n = prog.nvar
    lb, ub = prog.lb, prog.ub
    c = prog.c
    fixed = np.isfinite(lb) & np.isfinite(ub) & (ub - lb <= 0)
    bad = [prog.var_name(i) for i in np.nonzero(lb > ub)[0]]
    x_fixed = np.where(fixed, lb, 0.0)
    free = np.nonzero(~fixed)[0]
    const = prog.objective_constant + float(c[fixed] @ lb[fixed])

    Aeq, beq = prog.equality_system()
    Ale, ble = prog.inequality_system()
    beq = beq - Aeq @ x_fixed
    ble = ble - Ale @ x_fixed
    Aeq = Aeq[:, free].tocsr()
    Ale = Ale[:, free].tocsr()

    infeasible = list(bad)
    eq_nnz = np.diff(Aeq.indptr) > 0
    le_nnz = np.diff(Ale.indptr) > 0
    scale_eq = np.maximum(1.0, np.abs(beq))
    for r in np.nonzero(~eq_nnz & (np.abs(beq) > tol * scale_eq))[0]:
        infeasible.append(f"empty equality row {r} requires 0 == {beq[r]:g}")
    for r in np.nonzero(~le_nnz & (ble < -tol * np.maximum(1.0, np.abs(ble))))[0]:
        infeasible.append(f"empty inequality row {r} requires 0 <= {ble[r]:g}")
    eq_keep = np.nonzero(eq_nnz)[0]
    le_keep = np.nonzero(le_nnz)[0]

    lbf, ubf = lb[free], ub[free]
    lb_rows = np.nonzero(np.isfinite(lbf))[0]
    ub_rows = np.nonzero(np.isfinite(ubf))[0]
    nf = free.size
    G_parts = [Ale[le_keep],
               sp.csr_matrix((-np.ones(lb_rows.size), (np.arange(lb_rows.size), lb_rows)),
                             shape=(lb_rows.size, nf)),
               sp.csr_matrix((np.ones(ub_rows.size), (np.arange(ub_rows.size), ub_rows)),
                             shape=(ub_rows.size, nf))]
    h_parts = [ble[le_keep], -lbf[lb_rows], ubf[ub_rows]]
    l = le_keep.size + lb_rows.size + ub_rows.size

    blocks = prog.soc_blocks()
    order = sorted(range(len(blocks)), key=lambda i: blocks[i].dim)
    soc_dims: list[tuple[int, int]] = []
    for i in order:
        blk = blocks[i]
        if blk.count == 0:
            continue
        # cone: f = M x + off, need off + M x in Q  ->  s = h - G x with G = -M, h = off
        M = blk.matrix
        off = blk.offset + M @ x_fixed
        G_parts.append(-M[:, free])
        h_parts.append(off)
        if soc_dims and soc_dims[-1][0] == blk.dim:
            soc_dims[-1] = (blk.dim, soc_dims[-1][1] + blk.count)
        else:
            soc_dims.append((blk.dim, blk.count))
    G = sp.vstack(G_parts, format="csr") if G_parts else sp.csr_matrix((0, nf))
    h = np.concatenate(h_parts)
    return _Standard(c[free], Aeq[eq_keep], beq[eq_keep], G, h, Cones(l, tuple(soc_dims)),
                     free, x_fixed, const, eq_keep, le_keep, lb_rows, ub_rows,
                     [(i, blocks[i].dim) for i in order if blocks[i].count], infeasible)


def _equilibrate(st: _Standard, iters: int = 10):
    """Ruiz scaling: returns (c, A, b, G, h, D, Ea, Eg, cscale, bscale)."""
    A, G = st.A.copy().tocsr(), st.G.copy().tocsr()
    n = st.c.size
    D = np.ones(n)
    Ea = np.ones(A.shape[0])
    Eg = np.ones(G.shape[0])
    cones = st.cones
    for _ in range(iters):
        col = np.ones(n)
        M = sp.vstack([A, G]).tocsc()
        if M.nnz:
            col = np.sqrt(np.maximum(abs(M).max(axis=0).toarray().ravel(), 1e-8))
            col[col == 0] = 1.0
        ra = np.sqrt(np.maximum(abs(A).max(axis=1).toarray().ravel(), 1e-8)) if A.shape[0] else np.ones(0)
        rg = np.sqrt(np.maximum(abs(G).max(axis=1).toarray().ravel(), 1e-8)) if G.shape[0] else np.ones(0)
        # a cone must be scaled uniformly
        pos = cones.l
        for dim, cnt in cones.soc:
            blk = rg[pos:pos + dim * cnt].reshape(cnt, dim)
            blk[:] = blk.max(axis=1, keepdims=True)
            pos += dim * cnt
        A = sp.diags(1 / ra) @ A @ sp.diags(1 / col) if A.shape[0] else A @ sp.diags(1 / col)
        G = sp.diags(1 / rg) @ G @ sp.diags(1 / col) if G.shape[0] else G @ sp.diags(1 / col)
        D /= col
        Ea /= ra
        Eg /= rg
    c = D * st.c
    b = Ea * st.b
    h = Eg * st.h
    cscale = max(1.0, np.abs(c).max()) if c.size else 1.0
    bscale = max(1.0, np.abs(b).max() if b.size else 0.0, np.abs(h).max() if h.size else 0.0)
    return c / cscale, A.tocsr(), b / bscale, G.tocsr(), h / bscale, D, Ea, Eg, cscale, bscale


# -- backends ------------------------------------------------------------

def _run_ipm(st: _Standard, tol: float, max_iter: int, verbose: bool):
    c, A, b, G, h, D, Ea, Eg, cs, bs = _equilibrate(st)
    res = solve_conic(c, A, b, G, h, st.cones, tol=tol, max_iter=max_iter, verbose=verbose)
    x = D * res.x * bs
    y = Ea * res.y * cs
    z = Eg * res.z * cs
    return res.status, x, y, z, res.iterations


def _run_clarabel(st: _Standard, tol: float, max_iter: int, verbose: bool):
    import clarabel

    n = st.c.size
    Aall = sp.vstack([st.A, st.G]).tocsc()
    ball = np.concatenate([st.b, st.h])
    cones = []
    if st.A.shape[0]:
        cones.append(clarabel.ZeroConeT(st.A.shape[0]))
    if st.cones.l:
        cones.append(clarabel.NonnegativeConeT(st.cones.l))
    for dim, cnt in st.cones.soc:
        cones += [clarabel.SecondOrderConeT(dim)] * cnt
    settings = clarabel.DefaultSettings()
    settings.verbose = verbose
    settings.tol_feas = tol
    settings.tol_gap_abs = tol
    settings.tol_gap_rel = tol
    settings.max_iter = max_iter
    P = sp.csc_matrix((n, n))
    sol = clarabel.DefaultSolver(P, st.c, Aall, ball, cones, settings).solve()
    status = {"Solved": "optimal", "PrimalInfeasible": "infeasible",
              "DualInfeasible": "unbounded", "MaxIterations": "iteration-limit",
              "AlmostSolved": "optimal"}.get(str(sol.status), "numerical-failure")
    zall = np.array(sol.z)
    p = st.A.shape[0]
    return status, np.array(sol.x), zall[:p], zall[p:], int(sol.iterations)


BACKENDS = {"ipm": _run_ipm, "clarabel": _run_clarabel}


def solve(prog: ConvexProgram, tol: float = DEFAULT_TOL, max_iter: int = 150,
          backend: str = "ipm", verbose: bool = False) -> Solution:
    """Solve ``prog``; the returned status is one of :data:`STATUSES`.

    Duals follow the Lagrangian ``c'x + y'(Ax - b) + z'(Gx - h)`` with
    ``z >= 0`` for inequalities, so for a minimization a binding ``<=`` row
    has a nonnegative multiplier.
    """
    st = _standard_form(prog, tol)
    n = prog.nvar
    if st.infeasible_rows:
        log.debug("presolve infeasible: %s", st.infeasible_rows)
        return _empty(prog, "infeasible", st.x_fixed, backend)
    status, xf, y, z, iters = BACKENDS[backend](st, tol, max_iter, verbose)
    x = st.x_fixed.copy()
    x[st.free] = xf

    y_eq = np.zeros(prog.eq.n)
    y_eq[st.eq_keep] = y
    nle = st.le_keep.size
    z_le = np.zeros(prog.le.n)
    z_le[st.le_keep] = z[:nle]
    z_lb = np.zeros(n)
    z_ub = np.zeros(n)
    z_lb[st.free[st.lb_rows]] = z[nle:nle + st.lb_rows.size]
    z_ub[st.free[st.ub_rows]] = z[nle + st.lb_rows.size:st.cones.l]
    blocks = prog.soc_blocks()
    z_soc = [np.zeros(b.offset.size) for b in blocks]
    pos = st.cones.l
    for i, dim in st.soc_order:
        k = blocks[i].offset.size
        z_soc[i] = z[pos:pos + k]
        pos += k

    objective = prog.objective_value(x)
    dual_obj = -(st.b @ y + st.h @ z) + st.const if status == "optimal" else np.nan
    rep = check_solution(prog, x, tol)
    dres = np.linalg.norm(st.A.T @ y + st.G.T @ z + st.c, np.inf) / max(1.0, np.abs(st.c).max(initial=0))
    if status == "optimal" and rep.max_violation > 10 * tol * rep.scale:
        log.warning("solver reported optimal but residual is %.2e", rep.max_violation)
        status = "numerical-failure"
    return Solution(status, x, objective, float(dual_obj), y_eq, z_le, z_soc, z_lb, z_ub,
                    rep.max_violation, float(dres), float(abs(objective - dual_obj))
                    if status == "optimal" else np.inf, iters, backend,
                    list(prog.eq.tags), list(prog.le.tags))


def _empty(prog: ConvexProgram, status: str, x: np.ndarray, backend: str) -> Solution:
    return Solution(status, x, np.nan, np.nan, np.zeros(prog.eq.n), np.zeros(prog.le.n),
                    [np.zeros(b.offset.size) for b in prog.socs], np.zeros(prog.nvar),
                    np.zeros(prog.nvar), np.inf, np.inf, np.inf, 0, backend,
                    list(prog.eq.tags), list(prog.le.tags))


# -- independent verification -----------------------------------------------

@dataclass
class ResidualReport:
    by_class: dict[str, float]
    worst: dict[str, tuple[str, int, float]]  # class -> (tag or variable, index, violation)
    violations: list[tuple[str, str, int, float]]
    scale: float = 1.0

    @property
    def max_violation(self) -> float:
        return max(self.by_class.values(), default=0.0)

    def ok(self, tol: float) -> bool:
        return self.max_violation <= tol


def check_solution(prog: ConvexProgram, x: np.ndarray, tol: float = DEFAULT_TOL) -> ResidualReport:
    """Evaluate every constraint of ``prog`` at ``x`` from the raw data.

    Violations are absolute; ``scale`` is the largest right-hand-side
    magnitude seen, for callers that want a relative view.
    """
    x = np.asarray(x, dtype=float)
    by_class: dict[str, float] = {}
    worst: dict[str, tuple[str, int, float]] = {}
    violations: list[tuple[str, str, int, float]] = []
    scale = 1.0

    def record(cls: str, label: str, index: int, amount: float) -> None:
        if amount > by_class.get(cls, 0.0):
            by_class[cls] = amount
            worst[cls] = (label, index, amount)
        by_class.setdefault(cls, 0.0)
        if amount > tol:
            violations.append((cls, label, index, amount))

    lb, ub = prog.lb, prog.ub
    viol = np.maximum(np.nan_to_num(lb - x, nan=0.0, neginf=0.0),
                      np.nan_to_num(x - ub, nan=0.0, neginf=0.0))
    by_class["bounds"] = 0.0
    for i in np.nonzero(viol > 0)[0]:
        record("bounds", prog.var_name(int(i)), int(i), float(viol[i]))

    for cls, rows, absval in (("eq", prog.eq, True), ("le", prog.le, False)):
        by_class[cls] = 0.0
        mat = rows.matrix(prog.nvar)
        rhs = rows.rhs_vector()
        if rhs.size:
            scale = max(scale, float(np.abs(rhs).max()))
        r = mat @ x - rhs
        r = np.abs(r) if absval else np.maximum(r, 0.0)
        for tag, a, b in rows.tags:
            for k in np.nonzero(r[a:b] > 0)[0]:
                record(cls, tag, int(k), float(r[a + k]))

    by_class["soc"] = 0.0
    for blk in prog.soc_blocks():
        if blk.count == 0:
            continue
        f = (blk.matrix @ x + blk.offset).reshape(blk.count, blk.dim)
        v = np.linalg.norm(f[:, 1:], axis=1) - f[:, 0]
        for k in np.nonzero(v > 0)[0]:
            record("soc", blk.tag, int(k), float(v[k]))
    return ResidualReport(by_class, worst, violations, scale)
