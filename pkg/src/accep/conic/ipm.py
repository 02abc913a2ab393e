"""Primal-dual interior-point method for linear and second-order cone programs.

Solves

    minimize    c'x
    subject to  Ax = b,  Gx + s = h,  s in K

where K is a nonnegative orthant of dimension ``l`` followed by second-order
cones grouped by dimension.  The method runs Mehrotra predictor-corrector
steps on the homogeneous self-dual embedding with Nesterov-Todd scaling, so
infeasibility and unboundedness come out as certificates rather than as
stalls.  Linear systems use a regularized quasi-definite KKT matrix with a
sparse LU factorization and iterative refinement.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

log = logging.getLogger(__name__)

STEP_FRACTION = 0.99
REG = 1e-8


@dataclass(frozen=True)
class Cones:
    l: int
    soc: tuple[tuple[int, int], ...] = ()  # (dim, count), blocks contiguous after the orthant

    @property
    def size(self) -> int:
        return self.l + sum(d * n for d, n in self.soc)

    @property
    def degree(self) -> int:
        return self.l + sum(n for _, n in self.soc)

    def blocks(self, v: np.ndarray):
        """Yield (orthant part, [(dim, view of shape (count, dim))])."""
        out = []
        pos = self.l
        for d, n in self.soc:
            out.append((d, v[pos:pos + d * n].reshape(n, d)))
            pos += d * n
        return v[: self.l], out


@dataclass
class ConicResult:
    status: str
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    s: np.ndarray
    iterations: int
    pcost: float
    dcost: float
    pres: float
    dres: float
    gap: float


# -- cone algebra ------------------------------------------------------------

def _soc_jdot(u: np.ndarray) -> np.ndarray:
    return u[:, 0] ** 2 - np.einsum("ij,ij->i", u[:, 1:], u[:, 1:])


def _min_eig(cones: Cones, v: np.ndarray) -> float:
    lin, socs = cones.blocks(v)
    vals = [lin.min()] if lin.size else []
    for _, u in socs:
        if u.size:
            vals.append((u[:, 0] - np.linalg.norm(u[:, 1:], axis=1)).min())
    return min(vals) if vals else 1.0


def _identity(cones: Cones) -> np.ndarray:
    e = np.zeros(cones.size)
    e[: cones.l] = 1.0
    _, socs = cones.blocks(e)
    for _, u in socs:
        u[:, 0] = 1.0
    return e


def _jprod(cones: Cones, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Jordan product u o v."""
    out = np.empty_like(u)
    ul, us = cones.blocks(u)
    vl, vs = cones.blocks(v)
    ol, os_ = cones.blocks(out)
    ol[:] = ul * vl
    for (_, a), (_, b), (_, o) in zip(us, vs, os_):
        o[:, 0] = np.einsum("ij,ij->i", a, b)
        o[:, 1:] = a[:, :1] * b[:, 1:] + b[:, :1] * a[:, 1:]
    return out


def _jdiv(cones: Cones, lam: np.ndarray, r: np.ndarray) -> np.ndarray:
    """Solve lam o x = r for x."""
    out = np.empty_like(r)
    ll, ls = cones.blocks(lam)
    rl, rs = cones.blocks(r)
    ol, os_ = cones.blocks(out)
    ol[:] = rl / ll
    for (_, a), (_, b), (_, o) in zip(ls, rs, os_):
        det = _soc_jdot(a)
        a0 = a[:, 0]
        o[:, 0] = (a0 * b[:, 0] - np.einsum("ij,ij->i", a[:, 1:], b[:, 1:])) / det
        o[:, 1:] = (b[:, 1:] - o[:, :1] * a[:, 1:]) / a0[:, None]
    return out


def _max_step(cones: Cones, v: np.ndarray, dv: np.ndarray) -> float:
    """Largest alpha with v + alpha*dv in the cone (v interior)."""
    alpha = np.inf
    vl, vs = cones.blocks(v)
    dl, ds = cones.blocks(dv)
    neg = dl < 0
    if np.any(neg):
        alpha = min(alpha, float(np.min(-vl[neg] / dl[neg])))
    for (_, u), (_, d) in zip(vs, ds):
        if u.size:
            alpha = min(alpha, float(np.min(_soc_first_root(u, d))))
    return alpha


def _soc_first_root(u: np.ndarray, d: np.ndarray) -> np.ndarray:
    # boundary crossing = first positive root of q(t) = a t^2 + 2 b t + c, c > 0
    a = _soc_jdot(d)
    b = u[:, 0] * d[:, 0] - np.einsum("ij,ij->i", u[:, 1:], d[:, 1:])
    c = _soc_jdot(u)
    t = np.full(u.shape[0], np.inf)
    disc = b * b - a * c
    real = disc >= 0
    sq = np.sqrt(np.where(real, disc, 0.0))
    # stable pair of roots: q1 = -(b + sign(b) sq), roots q1/a and c/q1
    q1 = -(b + np.where(b >= 0, 1.0, -1.0) * sq)
    with np.errstate(divide="ignore", invalid="ignore"):
        r1 = np.where(a != 0, q1 / a, np.inf)
        r2 = np.where(q1 != 0, c / q1, np.inf)
    r1 = np.where(real & (r1 > 0), r1, np.inf)
    r2 = np.where(real & (r2 > 0), r2, np.inf)
    t = np.minimum(t, np.minimum(r1, r2))
    return t


class _Scaling:
    """Nesterov-Todd scaling W with W z = W^{-1} s = lam (W symmetric)."""

    def __init__(self, cones: Cones, s: np.ndarray, z: np.ndarray):
        self.cones = cones
        sl, ss = cones.blocks(s)
        zl, zs = cones.blocks(z)
        self.d = np.sqrt(sl / zl)
        self.soc = []
        for (dim, a), (_, b) in zip(ss, zs):
            sn = np.sqrt(_soc_jdot(a))
            zn = np.sqrt(_soc_jdot(b))
            sbar = a / sn[:, None]
            zbar = b / zn[:, None]
            gamma = np.sqrt((1.0 + np.einsum("ij,ij->i", sbar, zbar)) / 2.0)
            w = np.empty_like(sbar)
            w[:, 0] = sbar[:, 0] + zbar[:, 0]
            w[:, 1:] = sbar[:, 1:] - zbar[:, 1:]
            w /= 2.0 * gamma[:, None]
            eta = np.sqrt(sn / zn)
            self.soc.append((dim, eta, w))

    @staticmethod
    def _wbar(w: np.ndarray, v: np.ndarray) -> np.ndarray:
        w0 = w[:, :1]
        w1 = w[:, 1:]
        out = np.empty_like(v)
        out[:, 0] = w[:, 0] * v[:, 0] + np.einsum("ij,ij->i", w1, v[:, 1:])
        coef = v[:, :1] + np.einsum("ij,ij->i", w1, v[:, 1:])[:, None] / (1.0 + w0)
        out[:, 1:] = v[:, 1:] + coef * w1
        return out

    def apply(self, v: np.ndarray, inverse: bool = False) -> np.ndarray:
        out = np.empty_like(v)
        vl, vs = self.cones.blocks(v)
        ol, os_ = self.cones.blocks(out)
        ol[:] = vl / self.d if inverse else vl * self.d
        for (dim, eta, w), (_, u), (_, o) in zip(self.soc, vs, os_):
            if inverse:
                # W^{-1} = (1/eta) J Wbar J
                uj = u.copy()
                uj[:, 1:] *= -1
                r = self._wbar(w, uj)
                r[:, 1:] *= -1
                o[:] = r / eta[:, None]
            else:
                o[:] = self._wbar(w, u) * eta[:, None]
        return out

    def hessian(self) -> sp.csr_matrix:
        """W'W as a sparse block-diagonal matrix."""
        blocks = [sp.diags(self.d ** 2)]
        for dim, eta, w in self.soc:
            n = w.shape[0]
            if n == 0:
                continue
            eye = np.broadcast_to(np.eye(dim), (n, dim, dim)).copy()
            wb = eye.copy()
            wb[:, 0, 0] = w[:, 0]
            wb[:, 0, 1:] = w[:, 1:]
            wb[:, 1:, 0] = w[:, 1:]
            wb[:, 1:, 1:] += np.einsum("ni,nj->nij", w[:, 1:], w[:, 1:]) / (1.0 + w[:, :1, None])
            h = np.einsum("nij,njk->nik", wb, wb) * (eta ** 2)[:, None, None]
            rows = (np.arange(n)[:, None, None] * dim + np.arange(dim)[None, :, None]).repeat(dim, 2)
            cols = (np.arange(n)[:, None, None] * dim + np.arange(dim)[None, None, :]).repeat(dim, 1)
            blocks.append(sp.csr_matrix((h.ravel(), (rows.ravel(), cols.ravel())),
                                        shape=(n * dim, n * dim)))
        return sp.block_diag(blocks, format="csr")


# -- KKT solves --------------------------------------------------------------

class _Kkt:
    def __init__(self, A: sp.csr_matrix, G: sp.csr_matrix):
        self.n, self.p, self.m = A.shape[1], A.shape[0], G.shape[0]
        n, p, m = self.n, self.p, self.m
        self.base = sp.bmat([[None, A.T, G.T], [A, None, None], [G, None, None]],
                            format="csc")
        if self.base.shape != (n + p + m, n + p + m):
            self.base = sp.csc_matrix(self.base, shape=(n + p + m, n + p + m))
        self.reg = sp.diags(np.concatenate([np.full(n, REG), np.full(p, -REG), np.full(m, -REG)]))

    def factor(self, H: sp.spmatrix) -> None:
        n, p, m = self.n, self.p, self.m
        Hfull = sp.block_diag([sp.csr_matrix((n + p, n + p)), H], format="csc")
        self.true = (self.base - Hfull).tocsc()
        K = (self.true + self.reg).tocsc()
        self.lu = spla.splu(K, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                            options={"SymmetricMode": True})

    def solve(self, rhs: np.ndarray, refine: int = 20) -> np.ndarray:
        sol = self.lu.solve(rhs)
        target = 1e-14 * (1 + np.linalg.norm(rhs, np.inf))
        res = rhs - self.true @ sol
        err = np.linalg.norm(res, np.inf)
        for _ in range(refine):
            if err <= target:
                break
            trial = sol + self.lu.solve(res)
            res_t = rhs - self.true @ trial
            err_t = np.linalg.norm(res_t, np.inf)
            if err_t >= err:
                break  # refinement has stalled
            sol, res, err = trial, res_t, err_t
        return sol

    def split(self, v: np.ndarray):
        n, p = self.n, self.p
        return v[:n], v[n:n + p], v[n + p:]


# -- driver ------------------------------------------------------------------

def solve_conic(c, A, b, G, h, cones: Cones, tol: float = 1e-8, max_iter: int = 100,
                verbose: bool = False) -> ConicResult:
    n = c.size
    A = sp.csr_matrix(A)
    G = sp.csr_matrix(G)
    kkt = _Kkt(A, G)
    e = _identity(cones)
    nu = cones.degree

    # initial point from the least-squares-like systems with W = I
    kkt.factor(sp.identity(cones.size, format="csr"))
    x, _, zt = kkt.split(kkt.solve(np.concatenate([np.zeros(n), b, h])))
    s = -zt
    _, y, z = kkt.split(kkt.solve(np.concatenate([-c, np.zeros(b.size), np.zeros(h.size)])))
    for v in (s, z):
        t = _min_eig(cones, v)
        if t < 1e-8:
            v += (1.0 - t) * e
    tau, kappa = 1.0, 1.0

    nrm_b = max(1.0, np.linalg.norm(b, np.inf) if b.size else 0.0)
    nrm_h = max(1.0, np.linalg.norm(h, np.inf) if h.size else 0.0)
    nrm_c = max(1.0, np.linalg.norm(c, np.inf))
    status = "iteration-limit"
    pres = dres = gap = np.inf
    pcost = dcost = np.nan
    it = 0
    for it in range(max_iter + 1):
        r1 = A.T @ y + G.T @ z + c * tau
        r2 = b * tau - A @ x
        r3 = h * tau - G @ x - s
        r4 = kappa + c @ x + b @ y + h @ z
        mu = (s @ z + tau * kappa) / (nu + 1)

        pcost = c @ x / tau
        dcost = -(b @ y + h @ z) / tau
        pres = max(np.linalg.norm(r2, np.inf) / nrm_b if b.size else 0.0,
                   np.linalg.norm(r3, np.inf) / nrm_h if h.size else 0.0) / tau
        dres = np.linalg.norm(r1, np.inf) / nrm_c / tau
        gap = s @ z / tau ** 2
        relgap = abs(pcost - dcost) / max(1.0, min(abs(pcost), abs(dcost)))
        if verbose:
            log.info("%3d pcost=% .8e dcost=% .8e pres=%.1e dres=%.1e gap=%.1e tau=%.1e kappa=%.1e",
                     it, pcost, dcost, pres, dres, gap, tau, kappa)
        if pres <= tol and dres <= tol and (gap <= tol or relgap <= tol):
            status = "optimal"
            break
        # infeasibility certificates
        hz_by = h @ z + b @ y
        if hz_by < 0:
            res = np.linalg.norm(A.T @ y + G.T @ z, np.inf) / max(1.0, np.linalg.norm(c, np.inf))
            if res / -hz_by <= tol and tau < 1e-2 * kappa:
                status = "infeasible"
                break
        cx = c @ x
        if cx < 0:
            res = max(np.linalg.norm(A @ x, np.inf) if b.size else 0.0,
                      np.linalg.norm(G @ x + s, np.inf) if h.size else 0.0)
            if res / -cx <= tol and tau < 1e-2 * kappa:
                status = "unbounded"
                break
        if it == max_iter:
            break

        W = _Scaling(cones, s, z)
        lam = W.apply(z)
        try:
            kkt.factor(W.hessian())
        except RuntimeError:
            status = "numerical-failure"
            break

        d1 = kkt.solve(np.concatenate([-c, b, h]))
        x1, y1, z1 = kkt.split(d1)
        denom_base = -(c @ x1 + b @ y1 + h @ z1)

        def direction(sigma: float, rc: np.ndarray, rk: float):
            w3 = W.apply(_jdiv(cones, lam, rc))  # W'(lam \ rc), W symmetric
            rhs = np.concatenate([-(1 - sigma) * r1, (1 - sigma) * r2, (1 - sigma) * r3 - w3])
            x2, y2, z2 = kkt.split(kkt.solve(rhs))
            dtau = ((1 - sigma) * r4 + rk / tau + c @ x2 + b @ y2 + h @ z2) / (kappa / tau + denom_base)
            dx = x2 + dtau * x1
            dy = y2 + dtau * y1
            dz = z2 + dtau * z1
            ds = W.apply(_jdiv(cones, lam, rc) - W.apply(dz))
            dkappa = (rk - kappa * dtau) / tau
            return dx, dy, dz, ds, dtau, dkappa

        def step_to_boundary(dz, ds, dtau, dkappa) -> float:
            a = min(_max_step(cones, s, ds), _max_step(cones, z, dz))
            if dtau < 0:
                a = min(a, -tau / dtau)
            if dkappa < 0:
                a = min(a, -kappa / dkappa)
            return a

        lamsq = _jprod(cones, lam, lam)
        aff = direction(0.0, -lamsq, -tau * kappa)
        alpha_aff = min(1.0, step_to_boundary(aff[2], aff[3], aff[4], aff[5]))
        sigma = min(1.0, max(0.0, (1.0 - alpha_aff))) ** 3
        dsa = W.apply(aff[3], inverse=True)
        dza = W.apply(aff[2])
        rc = -lamsq + sigma * mu * e - _jprod(cones, dsa, dza)
        rk = -tau * kappa + sigma * mu - aff[4] * aff[5]
        dx, dy, dz, ds, dtau, dkappa = direction(sigma, rc, rk)
        alpha = min(1.0, STEP_FRACTION * step_to_boundary(dz, ds, dtau, dkappa))
        if not np.isfinite(alpha) or alpha < 1e-12:
            status = "numerical-failure"
            break
        x = x + alpha * dx
        y = y + alpha * dy
        z = z + alpha * dz
        s = s + alpha * ds
        tau = tau + alpha * dtau
        kappa = kappa + alpha * dkappa

    if status in ("optimal", "iteration-limit", "numerical-failure"):
        xs, ys, zs, ss = x / tau, y / tau, z / tau, s / tau
    else:
        xs, ys, zs, ss = x, y, z, s
    return ConicResult(status, xs, ys, zs, ss, it, float(pcost), float(dcost),
                       float(pres), float(dres), float(gap))
