"""Dense primal-dual interior-point method for small smooth NLPs.

    min f(x)  s.t.  g(x) = 0,  h(x) <= 0,  lb <= x <= ub

Inequalities get slacks ``z > 0`` with a log barrier; each iteration takes a
Newton step on the perturbed KKT conditions.  The reduced KKT matrix is
factored with a symmetric indefinite LDL^T and its inertia is corrected by
shifting the Hessian block until it has exactly ``n`` positive and ``m``
negative eigenvalues.  Variables with equal bounds are eliminated.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg as sla

Array = np.ndarray


@dataclass
class NlpFunctions:
    """Callbacks over the full variable vector.

    ``objective(x) -> (f, grad)``; ``equalities(x) -> (g, J)``;
    ``inequalities(x) -> (h, J)``; ``hessian(x, lam, mu) -> H`` of
    ``f + lam'g + mu'h``.  Jacobians are dense ``(rows, n)`` arrays.
    """

    objective: Callable[[Array], tuple[float, Array]]
    equalities: Callable[[Array], tuple[Array, Array]]
    inequalities: Callable[[Array], tuple[Array, Array]]
    hessian: Callable[[Array, Array, Array], Array]
    lb: Array
    ub: Array


@dataclass
class NlpResult:
    status: str  # converged | iteration-limit | stalled | numerical-failure
    x: Array
    f: float
    lam: Array
    mu: Array
    iterations: int
    feascond: float
    gradcond: float
    compcond: float


def _inertia(d: Array) -> tuple[int, int, int]:
    """(positive, negative, zero) eigenvalue counts of the block-diagonal D."""
    pos = neg = zero = 0
    for i, step in _blocks(d):
        ev = np.linalg.eigvalsh(d[i:i + step, i:i + step])
        for e in ev:
            if e > 1e-13:
                pos += 1
            elif e < -1e-13:
                neg += 1
            else:
                zero += 1
    return pos, neg, zero


def _blocks(d: Array) -> list[tuple[int, int]]:
    out, i, n = [], 0, d.shape[0]
    while i < n:
        step = 2 if i + 1 < n and d[i + 1, i] != 0.0 else 1
        out.append((i, step))
        i += step
    return out


def _block_diag_solve(d: Array, y: Array) -> Array:
    w = np.empty_like(y)
    for i, step in _blocks(d):
        if step == 1:
            w[i] = y[i] / d[i, i]
        else:
            a, b, c = d[i, i], d[i + 1, i], d[i + 1, i + 1]
            det = a * c - b * b
            w[i] = (c * y[i] - b * y[i + 1]) / det
            w[i + 1] = (a * y[i + 1] - b * y[i]) / det
    return w


def _ldl_solve(lu: Array, d: Array, perm: Array, rhs: Array) -> Array:
    # K = lu d lu' with lu[perm] unit lower triangular
    lp = lu[perm]
    y = sla.solve_triangular(lp, rhs[perm], lower=True, unit_diagonal=True)
    w = _block_diag_solve(d, y)
    xp = sla.solve_triangular(lp.T, w, lower=False, unit_diagonal=True)
    out = np.empty_like(xp)
    out[perm] = xp
    return out


def _solve_kkt(M: Array, J: Array, r1: Array, r2: Array, state: dict) -> tuple[Array, Array]:
    """Solve [[M, J'], [J, -dc I]] [dx; dl] = [r1; r2] with inertia correction."""
    n, m = M.shape[0], J.shape[0]
    delta_w = 0.0
    delta_c = 1e-10 if m else 0.0
    last = state.get("delta_w", 0.0)
    for _ in range(40):
        K = np.zeros((n + m, n + m))
        K[:n, :n] = M + delta_w * np.eye(n)
        K[:n, n:] = J.T
        K[n:, :n] = J
        K[n:, n:] = -delta_c * np.eye(m)
        lu, d, perm = sla.ldl(K, lower=True)
        pos, neg, zero = _inertia(d)
        if pos == n and neg == m and zero == 0:
            sol = _ldl_solve(lu, d, perm, np.concatenate([r1, r2]))
            state["delta_w"] = delta_w
            return sol[:n], sol[n:]
        if zero and m:
            delta_c = max(delta_c * 10, 1e-8)
        if delta_w == 0.0:
            delta_w = 1e-4 if last == 0.0 else max(1e-20, last / 3.0)
        else:
            delta_w *= 100.0 if last == 0.0 else 8.0
    raise np.linalg.LinAlgError("could not correct KKT inertia")


def pdipm(fun: NlpFunctions, x0: Array, tol: float = 1e-6, max_iter: int = 200,
          sigma: float = 0.1, xi: float = 0.99995, feas_tol: float | None = None) -> NlpResult:
    """Minimize from ``x0``.

    Convergence needs the scaled feasibility, stationarity, complementarity
    and cost-change measures below ``tol``; with ``feas_tol`` the largest
    absolute constraint violation must also be below it.
    """
    lb = np.asarray(fun.lb, dtype=float)
    ub = np.asarray(fun.ub, dtype=float)
    fixed = np.isfinite(lb) & np.isfinite(ub) & (ub - lb <= 1e-12)
    free = np.flatnonzero(~fixed)
    full = np.clip(np.asarray(x0, dtype=float).copy(), lb, ub)
    full[fixed] = lb[fixed]
    x = full[free].copy()
    lo = np.flatnonzero(np.isfinite(lb[free]))
    hi = np.flatnonzero(np.isfinite(ub[free]))
    nfree = free.size

    def expand(xf):
        out = full.copy()
        out[free] = xf
        return out

    def evaluate(xf):
        xx = expand(xf)
        f, df = fun.objective(xx)
        g, dg = fun.equalities(xx)
        h_nl, dh_nl = fun.inequalities(xx)
        h = np.concatenate([h_nl, lb[free][lo] - xf[lo], xf[hi] - ub[free][hi]])
        dh = np.zeros((h.size, nfree))
        dh[:h_nl.size] = dh_nl[:, free]
        dh[h_nl.size + np.arange(lo.size), lo] = -1.0
        dh[h_nl.size + lo.size + np.arange(hi.size), hi] = 1.0
        return f, df[free], g, dg[:, free], h, dh, h_nl.size

    f, df, g, dg, h, dh, n_nl = evaluate(x)
    neq, niq = g.size, h.size
    z0 = 1.0
    gamma = 1.0
    lam = np.zeros(neq)
    z = np.full(niq, z0)
    mu = np.full(niq, z0)
    k = h < -z0
    z[k] = -h[k]
    k = (gamma / z) > z0
    mu[k] = gamma / z[k]
    e = np.ones(niq)
    state: dict = {}
    f0 = f
    status = "iteration-limit"
    stall = 0
    it = 0
    feascond = gradcond = compcond = np.inf

    def abs_feasible():
        if feas_tol is None:
            return True
        worst = max(float(np.max(np.abs(g))) if neq else 0.0,
                    float(np.max(h)) if niq else 0.0)
        return worst <= feas_tol

    def conditions():
        Lx = df + dg.T @ lam + dh.T @ mu
        maxh = max(float(np.max(h)), 0.0) if niq else 0.0
        feas = max(float(np.max(np.abs(g))) if neq else 0.0, maxh) / (
            1 + max(float(np.max(np.abs(x))) if nfree else 0.0,
                    float(np.max(z)) if niq else 0.0))
        grad = float(np.max(np.abs(Lx))) / (1 + max(float(np.max(np.abs(lam))) if neq else 0.0,
                                                    float(np.max(np.abs(mu))) if niq else 0.0))
        comp = float(z @ mu) / (1 + (float(np.max(np.abs(x))) if nfree else 0.0))
        return feas, grad, comp

    feascond, gradcond, compcond = conditions()
    if feascond < tol and gradcond < tol and compcond < tol and abs_feasible():
        status = "converged"
    while status != "converged" and it < max_iter:
        it += 1
        xx = expand(x)
        lam_nl = mu[:n_nl]
        H = fun.hessian(xx, lam, lam_nl)[np.ix_(free, free)]
        with np.errstate(over="ignore", invalid="ignore"):
            zinv = 1.0 / z
            dh_zinv = dh.T * zinv  # n x niq
            M = H + (dh_zinv * mu) @ dh
            Lx = df + dg.T @ lam + dh.T @ mu
            N = Lx + dh_zinv @ (mu * h + gamma * e)
        if not (np.all(np.isfinite(M)) and np.all(np.isfinite(N))):
            status = "numerical-failure"
            break
        try:
            dx, dlam = _solve_kkt(M, dg, -N, -g, state)
        except (np.linalg.LinAlgError, ValueError):
            status = "numerical-failure"
            break
        if not (np.all(np.isfinite(dx)) and np.all(np.isfinite(dlam))):
            status = "numerical-failure"
            break
        dz = -h - z - dh @ dx
        dmu = -mu + zinv * (gamma * e - mu * dz)
        neg = dz < 0
        alphap = min(xi * float(np.min(z[neg] / -dz[neg])), 1.0) if np.any(neg) else 1.0
        neg = dmu < 0
        alphad = min(xi * float(np.min(mu[neg] / -dmu[neg])), 1.0) if np.any(neg) else 1.0
        x = x + alphap * dx
        z = z + alphap * dz
        lam = lam + alphad * dlam
        mu = mu + alphad * dmu
        if niq:
            gamma = sigma * float(z @ mu) / niq
        f, df, g, dg, h, dh, _ = evaluate(x)
        if not (np.isfinite(f) and np.all(np.isfinite(g)) and np.all(np.isfinite(h))):
            status = "numerical-failure"
            break
        feascond, gradcond, compcond = conditions()
        costcond = abs(f - f0) / (1 + abs(f0))
        f0 = f
        if (feascond < tol and gradcond < tol and compcond < tol and costcond < tol
                and abs_feasible()):
            status = "converged"
            break
        stall = stall + 1 if max(alphap, alphad) < 1e-8 else 0
        if stall >= 5:
            status = "stalled"
            break
    return NlpResult(status, expand(x), float(f), lam, mu[:n_nl], it, feascond, gradcond,
                     compcond)
