"""Exact AC physics: branch flows, Newton power flow and snapshot AC-OPF/GEP.

Branch flows use the pi-equivalent model with series admittance
``g + jb`` and the shunt susceptance split across both ends; all three
scale with the number of circuits.  Branches with no circuits are out of
service.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import networkx as nx
import numpy as np

from accep.netmodel import AcBranch, NetworkCase, SnapshotSeries
from accep.nlp import NlpFunctions, pdipm
from accep.plan import PlanSolution

FEAS_TOL = 1e-6
NLP_MAX_ITER = 200


# -- branch flows ------------------------------------------------------------

def ac_branch_flows(v_n, v_m, theta_l, branch: AcBranch, u_l: float = 1.0):
    """Active and reactive flow at both ends of ``branch`` with ``u_l`` circuits.

    Returns ``(p_l, q_l, p_rev, q_rev)``; arguments broadcast.
    """
    if u_l <= 0:
        raise ValueError("branch flows need a positive number of circuits")
    par = branch.parameters(u_l)
    p, q = _flow_values(v_n, v_m, theta_l, par.g, par.b, par.b_sh)
    pr, qr = _flow_values(v_m, v_n, -np.asarray(theta_l), par.g, par.b, par.b_sh)
    return p, q, pr, qr


def _flow_values(vn, vm, th, g, b, bsh):
    vn, vm, th = (np.asarray(a, dtype=float) for a in (vn, vm, th))
    c, s = np.cos(th), np.sin(th)
    p = g * vn**2 - vn * vm * (g * c + b * s)
    q = -(b + bsh / 2.0) * vn**2 - vn * vm * (g * s - b * c)
    return p, q


def flow_derivatives(vn, vm, th, g, b, bsh):
    """Flows leaving the n-end and their derivatives.

    Derivatives are taken with respect to ``(theta_n, theta_m, v_n, v_m)``
    where ``th = theta_n - theta_m``.  Returns ``p, q`` of shape (k,),
    gradients (k, 4) and Hessians (k, 4, 4).
    """
    vn, vm, th, g, b, bsh = np.broadcast_arrays(*(np.asarray(a, dtype=float)
                                                  for a in (vn, vm, th, g, b, bsh)))
    c, s = np.cos(th), np.sin(th)
    A = g * c + b * s
    B = g * s - b * c
    vv = vn * vm
    bb = b + bsh / 2.0
    p = g * vn**2 - vv * A
    q = -bb * vn**2 - vv * B
    k = vn.size
    dp = np.empty((k, 4))
    dq = np.empty((k, 4))
    dp[:, 0] = vv * B
    dp[:, 1] = -vv * B
    dp[:, 2] = 2 * g * vn - vm * A
    dp[:, 3] = -vn * A
    dq[:, 0] = -vv * A
    dq[:, 1] = vv * A
    dq[:, 2] = -2 * bb * vn - vm * B
    dq[:, 3] = -vn * B
    sgn = np.array([1.0, -1.0])
    Hp = np.zeros((k, 4, 4))
    Hq = np.zeros((k, 4, 4))
    Hp[:, :2, :2] = (vv * A)[:, None, None] * np.outer(sgn, sgn)
    Hq[:, :2, :2] = (vv * B)[:, None, None] * np.outer(sgn, sgn)
    for j, (dpv, dqv) in enumerate((((vm * B), (-vm * A)), ((vn * B), (-vn * A)))):
        # mixed angle / magnitude terms
        Hp[:, :2, 2 + j] = dpv[:, None] * sgn
        Hp[:, 2 + j, :2] = dpv[:, None] * sgn
        Hq[:, :2, 2 + j] = dqv[:, None] * sgn
        Hq[:, 2 + j, :2] = dqv[:, None] * sgn
    Hp[:, 2, 2] = 2 * g
    Hp[:, 2, 3] = Hp[:, 3, 2] = -A
    Hq[:, 2, 2] = -2 * bb
    Hq[:, 2, 3] = Hq[:, 3, 2] = -B
    return p.ravel(), q.ravel(), dp, dq, Hp, Hq


# -- network helpers ---------------------------------------------------------

@dataclass(frozen=True)
class _Grid:
    """In-service AC branches with parameters for given circuit counts."""

    fb: np.ndarray
    tb: np.ndarray
    pos: np.ndarray  # branch positions in the case
    g: np.ndarray
    b: np.ndarray
    b_sh: np.ndarray
    cap: np.ndarray  # a * f_max * u
    theta_max: np.ndarray
    n_bus: int

    def end_vars(self, reverse: bool) -> tuple[np.ndarray, np.ndarray]:
        return (self.tb, self.fb) if reverse else (self.fb, self.tb)


def _grid(case: NetworkCase, circuits) -> _Grid:
    idx = case.bus_index()
    circuits = np.asarray(circuits, dtype=float)
    live = np.flatnonzero(circuits > 1e-9)
    brs = [case.ac_branches[j] for j in live]
    pars = [br.parameters(circuits[j]) for br, j in zip(brs, live)]
    return _Grid(
        fb=np.array([idx[br.from_bus] for br in brs], dtype=int),
        tb=np.array([idx[br.to_bus] for br in brs], dtype=int),
        pos=live,
        g=np.array([p.g for p in pars]), b=np.array([p.b for p in pars]),
        b_sh=np.array([p.b_sh for p in pars]),
        cap=np.array([br.a * br.f_max * circuits[j] for br, j in zip(brs, live)]),
        theta_max=np.array([br.theta_max for br in brs]),
        n_bus=len(case.buses),
    )


def reference_buses(case: NetworkCase, circuits) -> list[int]:
    """Lowest bus of every component formed by in-service AC branches."""
    grid = _grid(case, circuits)
    gr = nx.Graph()
    gr.add_nodes_from(range(len(case.buses)))
    gr.add_edges_from(zip(grid.fb.tolist(), grid.tb.tolist()))
    return sorted(min(c) for c in nx.connected_components(gr))


def bus_flows(grid: _Grid, v: np.ndarray, theta: np.ndarray):
    """Sum of flows leaving each bus and the per-end branch flows."""
    P = np.zeros(grid.n_bus)
    Q = np.zeros(grid.n_bus)
    ends = []
    for rev in (False, True):
        n, m = grid.end_vars(rev)
        p, q = _flow_values(v[n], v[m], theta[n] - theta[m], grid.g, grid.b, grid.b_sh)
        np.add.at(P, n, p)
        np.add.at(Q, n, q)
        ends.append((p, q))
    return P, Q, ends


def _flow_jacobian(grid: _Grid, v, theta):
    """d(P, Q leaving each bus) / d(theta, v), dense (2N, 2N)."""
    N = grid.n_bus
    J = np.zeros((2 * N, 2 * N))
    for rev in (False, True):
        n, m = grid.end_vars(rev)
        _, _, dp, dq, _, _ = flow_derivatives(v[n], v[m], theta[n] - theta[m],
                                              grid.g, grid.b, grid.b_sh)
        cols = np.stack([n, m, N + n, N + m], axis=1)
        for j in range(4):
            np.add.at(J, (n, cols[:, j]), dp[:, j])
            np.add.at(J, (N + n, cols[:, j]), dq[:, j])
    return J


# -- Newton power flow -------------------------------------------------------

@dataclass
class PowerFlowResult:
    status: str  # converged | diverged | singular
    v: np.ndarray
    theta: np.ndarray
    iterations: int
    max_mismatch: float
    p_slack: np.ndarray = field(default_factory=lambda: np.zeros(0))
    q_slack: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def converged(self) -> bool:
        return self.status == "converged"


def power_flow_jacobian(case: NetworkCase, circuits, v, theta) -> np.ndarray:
    """Jacobian of the bus flow sums with respect to ``(theta, v)``."""
    return _flow_jacobian(_grid(case, circuits), np.asarray(v, float), np.asarray(theta, float))


def newton_power_flow(case: NetworkCase, circuits, p_net, q_net, v0=None, theta0=None,
                      slack: list[int] | None = None, tol: float = 1e-8,
                      max_iter: int = 30) -> PowerFlowResult:
    """Solve the AC power flow for net bus injections ``p_net + j q_net``.

    Every slack bus keeps its seed magnitude and angle and absorbs the
    mismatch of its island; all other buses are PQ buses.
    """
    grid = _grid(case, circuits)
    N = grid.n_bus
    v = np.ones(N) if v0 is None else np.asarray(v0, dtype=float).copy()
    theta = np.zeros(N) if theta0 is None else np.asarray(theta0, dtype=float).copy()
    slack = reference_buses(case, circuits) if slack is None else list(slack)
    pq = np.setdiff1d(np.arange(N), slack)
    unknown = np.concatenate([pq, N + pq])
    p_net = np.asarray(p_net, dtype=float)
    q_net = np.asarray(q_net, dtype=float)

    def mismatch():
        P, Q, _ = bus_flows(grid, v, theta)
        return np.concatenate([P - p_net, Q - q_net])

    F = mismatch()
    it = 0
    status = "diverged"
    while True:
        err = float(np.max(np.abs(F[unknown]))) if unknown.size else 0.0
        if err <= tol:
            status = "converged"
            break
        if it >= max_iter or not np.isfinite(err) or err > 1e10:
            break
        J = _flow_jacobian(grid, v, theta)[np.ix_(unknown, unknown)]
        try:
            dx = np.linalg.solve(J, -F[unknown])
        except np.linalg.LinAlgError:
            status = "singular"
            break
        theta[pq] += dx[:pq.size]
        v[pq] += dx[pq.size:]
        F = mismatch()
        it += 1
    P, Q, _ = bus_flows(grid, v, theta)
    return PowerFlowResult(status, v, theta, it,
                           float(np.max(np.abs(F[unknown]))) if unknown.size else 0.0,
                           P[slack] - p_net[slack], Q[slack] - q_net[slack])


# -- snapshot operating points ----------------------------------------------

@dataclass
class OperatingPoint:
    t: int
    v: np.ndarray
    theta: np.ndarray
    p: np.ndarray
    q: np.ndarray
    beta: np.ndarray
    beta_su: np.ndarray
    beta_sd: np.ndarray
    u_s: np.ndarray
    pc: np.ndarray
    p_ac: np.ndarray
    q_ac: np.ndarray
    p_ac_rev: np.ndarray
    q_ac_rev: np.ndarray
    p_dc_fwd: np.ndarray
    p_dc_bwd: np.ndarray
    p_dc: np.ndarray
    p_dc_rev: np.ndarray


@dataclass
class NlpReport:
    status: str  # feasible-optimal | locally-infeasible | iteration-limit
    objective: float
    iterations: int
    start: str
    max_balance_residual: float
    max_violation: float
    attempts: list[dict] = field(default_factory=list)

    @property
    def feasible(self) -> bool:
        return self.status == "feasible-optimal"


def net_injections(case: NetworkCase, series: SnapshotSeries, t: int, p, q, pc,
                   p_dc, p_dc_rev):
    """Net bus injection (generation - charging - load - HVDC export)."""
    idx = case.bus_index()
    N = len(case.buses)
    P = np.array([-series.p_load(b.id)[t] for b in case.buses]) if N else np.zeros(0)
    Q = np.array([-series.q_load(b.id)[t] for b in case.buses]) if N else np.zeros(0)
    for i, s in enumerate(case.sources):
        P[idx[s.bus]] += p[i] - pc[i]
        Q[idx[s.bus]] += q[i]
    for j, d in enumerate(case.dc_branches):
        P[idx[d.from_bus]] -= p_dc[j]
        P[idx[d.to_bus]] -= p_dc_rev[j]
    return P, Q


class _SnapshotModel:
    """Single-snapshot AC problem around an initial plan.

    With ``expand`` the unit counts of non-storage sources may grow (the
    generation expansion problem); otherwise they are fixed (the OPF).
    """

    def __init__(self, case: NetworkCase, series: SnapshotSeries, t: int,
                 initial: PlanSolution, u_s, expand: bool) -> None:
        self.case, self.series, self.t, self.initial = case, series, t, initial
        self.expand = expand
        T = series.T
        N, S, D = len(case.buses), len(case.sources), len(case.dc_branches)
        self.N, self.S, self.D = N, S, D
        self.grid = _grid(case, initial.u_ac)
        o = 0
        self.th = np.arange(o, o + N); o += N
        self.v = np.arange(o, o + N); o += N
        self.p = np.arange(o, o + S); o += S
        self.q = np.arange(o, o + S); o += S
        self.beta = np.arange(o, o + S); o += S
        self.bsu = np.arange(o, o + S); o += S
        self.bsd = np.arange(o, o + S); o += S
        self.u = np.arange(o, o + S); o += S
        self.fwd = np.arange(o, o + D); o += D
        self.bwd = np.arange(o, o + D); o += D
        self.n = o

        sto = np.array([s.is_storage for s in case.sources], dtype=bool)
        linked = np.array([s.linked_branch is not None for s in case.sources], dtype=bool)
        u_s = np.asarray(u_s, dtype=float)
        prev = (t - 1) % T  # the first snapshot follows the last one
        self.beta_prev = initial.beta[:, prev].copy()
        self.bsu_star = initial.beta_su[:, t].copy()
        self.pc = initial.pc[:, t].copy()
        self.p_star = initial.p[:, t].copy()
        self.u_s = u_s

        lb = np.full(self.n, -np.inf)
        ub = np.full(self.n, np.inf)
        lb[self.th], ub[self.th] = -math.pi / 2, math.pi / 2
        for r in reference_buses(case, initial.u_ac):
            lb[self.th[r]] = ub[self.th[r]] = 0.0
        lb[self.v], ub[self.v] = 0.9, 1.1
        lb[self.beta] = 0.0
        lb[self.bsu] = np.where(sto, self.bsu_star, self.bsu_star)
        ub[self.bsu] = np.where(sto, self.bsu_star, np.inf)
        lb[self.bsd] = 0.0
        ub[self.bsd] = np.where(sto, 0.0, np.inf)
        u_max = np.array([s.u_max for s in case.sources])
        grow = expand & ~sto & ~linked
        lb[self.u] = u_s
        ub[self.u] = np.where(grow, np.maximum(u_max, u_s), u_s)
        lb[self.fwd] = lb[self.bwd] = 0.0
        self.lb, self.ub = lb, ub

        # linear rows
        Aeq, beq, Ain, bin_ = [], [], [], []

        def row(pairs):
            r = np.zeros(self.n)
            for i, c in pairs:
                r[i] += c
            return r

        for i, s in enumerate(case.sources):
            if not s.is_storage:
                Aeq.append(row([(self.beta[i], 1.0), (self.bsu[i], -1.0), (self.bsd[i], 1.0)]))
                beq.append(self.beta_prev[i])
        avail = np.array([series.avail(s)[t] for s in case.sources]) if S else np.zeros(0)
        for i, s in enumerate(case.sources):
            Ain.append(row([(self.beta[i], 1.0), (self.u[i], -1.0)])); bin_.append(0.0)
            Ain.append(row([(self.p[i], 1.0), (self.beta[i], -avail[i] * s.p_max)])); bin_.append(0.0)
            Ain.append(row([(self.p[i], -1.0), (self.beta[i], s.p_min)])); bin_.append(0.0)
            Ain.append(row([(self.q[i], 1.0), (self.beta[i], -s.q_max)])); bin_.append(0.0)
            Ain.append(row([(self.q[i], -1.0), (self.beta[i], s.q_min)])); bin_.append(0.0)
            for tau, ups in s.capability.upper:
                Ain.append(row([(self.p[i], 1.0), (self.q[i], -tau),
                                (self.beta[i], -ups * s.p_max)])); bin_.append(0.0)
            for tau, ups in s.capability.lower:
                Ain.append(row([(self.p[i], -1.0), (self.q[i], tau),
                                (self.beta[i], ups * s.p_max)])); bin_.append(0.0)
            if s.is_storage:
                Ain.append(row([(self.beta[i], -s.p_max)])); bin_.append(-self.pc[i])
                Ain.append(row([(self.p[i], 1.0), (self.beta[i], -s.p_max)])); bin_.append(-self.pc[i])
                Ain.append(row([(self.p[i], 1.0)])); bin_.append(max(self.p_star[i], 0.0))
        g = self.grid
        for k in range(g.fb.size):
            for sign in (1.0, -1.0):
                Ain.append(row([(self.th[g.fb[k]], sign), (self.th[g.tb[k]], -sign)]))
                bin_.append(g.theta_max[k])
        for j, d in enumerate(case.dc_branches):
            cap = d.p_max * initial.u_dc[j]
            eta = d.eta
            for sign in (1.0, -1.0):
                Ain.append(row([(self.fwd[j], sign), (self.bwd[j], -sign * (1 - eta))])); bin_.append(cap)
                Ain.append(row([(self.bwd[j], sign), (self.fwd[j], -sign * (1 - eta))])); bin_.append(cap)
        self.Aeq = np.array(Aeq).reshape(-1, self.n)
        self.beq = np.array(beq)
        self.Ain = np.array(Ain).reshape(-1, self.n)
        self.bin = np.array(bin_)

        c = np.zeros(self.n)
        delta = float(series.delta[t])
        for i, s in enumerate(case.sources):
            c[self.p[i]] = delta * s.o
            c[self.bsu[i]] = s.o_su
            c[self.bsd[i]] = s.o_su
            c[self.u[i]] = s.c if expand else 0.0
        self.c = c

        idx = case.bus_index()
        self.src_bus = np.array([idx[s.bus] for s in case.sources], dtype=int)
        self.dc_from = np.array([idx[d.from_bus] for d in case.dc_branches], dtype=int)
        self.dc_to = np.array([idx[d.to_bus] for d in case.dc_branches], dtype=int)
        self.eta = np.array([d.eta for d in case.dc_branches])
        self.d_p = np.array([series.p_load(b.id)[t] for b in case.buses])
        self.d_q = np.array([series.q_load(b.id)[t] for b in case.buses])
        self.pc_bus = np.zeros(N)
        np.add.at(self.pc_bus, self.src_bus, self.pc)

    # -- callbacks -----------------------------------------------------------
    def objective(self, x):
        return float(self.c @ x), self.c.copy()

    def _branch_terms(self, x):
        g = self.grid
        v, th = x[self.v], x[self.th]
        out = []
        for rev in (False, True):
            n, m = g.end_vars(rev)
            vals = flow_derivatives(v[n], v[m], th[n] - th[m], g.g, g.b, g.b_sh)
            cols = np.stack([self.th[n], self.th[m], self.v[n], self.v[m]], axis=1)
            out.append((n, cols, vals))
        return out

    def equalities(self, x):
        N = self.N
        gP = -self.d_p - self.pc_bus
        gQ = -self.d_q.copy()
        gP = gP + np.bincount(self.src_bus, weights=x[self.p], minlength=N)
        gQ = gQ + np.bincount(self.src_bus, weights=x[self.q], minlength=N)
        J = np.zeros((2 * N + self.Aeq.shape[0], self.n))
        J[self.src_bus, self.p] += 1.0
        J[N + self.src_bus, self.q] += 1.0
        if self.D:
            fwd, bwd = x[self.fwd], x[self.bwd]
            pdc = fwd - (1 - self.eta) * bwd
            pdc_rev = bwd - (1 - self.eta) * fwd
            np.add.at(gP, self.dc_from, -pdc)
            np.add.at(gP, self.dc_to, -pdc_rev)
            np.add.at(J, (self.dc_from, self.fwd), -1.0)
            np.add.at(J, (self.dc_from, self.bwd), 1 - self.eta)
            np.add.at(J, (self.dc_to, self.bwd), -1.0)
            np.add.at(J, (self.dc_to, self.fwd), 1 - self.eta)
        for n, cols, (p, q, dp, dq, _, _) in self._branch_terms(x):
            np.add.at(gP, n, -p)
            np.add.at(gQ, n, -q)
            for j in range(4):
                np.add.at(J, (n, cols[:, j]), -dp[:, j])
                np.add.at(J, (N + n, cols[:, j]), -dq[:, j])
        lin = self.Aeq @ x - self.beq
        J[2 * N:] = self.Aeq
        return np.concatenate([gP, gQ, lin]), J

    def inequalities(self, x):
        g = self.grid
        h = [self.Ain @ x - self.bin]
        J = [self.Ain]
        if g.fb.size:
            for n, cols, (p, q, dp, dq, _, _) in self._branch_terms(x):
                inv = 1.0 / np.maximum(g.cap, 1e-12) ** 2
                h.append((p * p + q * q) * inv - 1.0)
                Jt = np.zeros((n.size, self.n))
                grad = 2.0 * (p[:, None] * dp + q[:, None] * dq) * inv[:, None]
                for j in range(4):
                    np.add.at(Jt, (np.arange(n.size), cols[:, j]), grad[:, j])
                J.append(Jt)
        return np.concatenate(h), np.vstack(J)

    def hessian(self, x, lam, mu):
        N = self.N
        H = np.zeros((self.n, self.n))
        g = self.grid
        nb = g.fb.size
        mu_nl = mu[self.Ain.shape[0]:] if mu.size > self.Ain.shape[0] else np.zeros(2 * nb)
        inv = 1.0 / np.maximum(g.cap, 1e-12) ** 2
        for e, (n, cols, (p, q, dp, dq, Hp, Hq)) in enumerate(self._branch_terms(x)):
            w = -(lam[n][:, None, None] * Hp + lam[N + n][:, None, None] * Hq)
            if nb:
                m_e = mu_nl[e * nb:(e + 1) * nb] * inv * 2.0
                w = w + m_e[:, None, None] * (
                    dp[:, :, None] * dp[:, None, :] + p[:, None, None] * Hp
                    + dq[:, :, None] * dq[:, None, :] + q[:, None, None] * Hq)
            for a in range(4):
                for b in range(4):
                    np.add.at(H, (cols[:, a], cols[:, b]), w[:, a, b])
        return H

    def functions(self) -> NlpFunctions:
        def ineq(x):
            return self.inequalities(x)

        def hess(x, lam, mu_nl):
            return self.hessian(x, lam, mu_nl)

        return NlpFunctions(self.objective, self.equalities, ineq, hess, self.lb, self.ub)

    # -- starts and checks ---------------------------------------------------
    def warm_start(self) -> np.ndarray:
        pl, t = self.initial, self.t
        x = np.zeros(self.n)
        x[self.th] = pl.theta[:, t]
        x[self.v] = np.clip(pl.v[:, t], 0.9, 1.1)
        x[self.p] = pl.p[:, t]
        x[self.q] = pl.q[:, t]
        x[self.beta] = np.minimum(pl.beta[:, t], self.u_s)
        x[self.bsu] = self.bsu_star
        x[self.u] = self.u_s
        x[self.fwd] = pl.p_dc_fwd[:, t]
        x[self.bwd] = pl.p_dc_bwd[:, t]
        return x

    def flat_start(self) -> np.ndarray:
        x = np.zeros(self.n)
        x[self.v] = 1.0
        x[self.beta] = 0.5 * self.u_s
        x[self.bsu] = self.bsu_star
        x[self.u] = self.u_s
        return x

    def violations(self, x) -> tuple[float, float]:
        g, _ = self.equalities(x)
        h, _ = self.inequalities(x)
        bal = float(np.max(np.abs(g))) if g.size else 0.0
        viol = max(float(np.max(h)) if h.size else 0.0,
                   float(np.max(self.lb - x)), float(np.max(x - self.ub)), 0.0)
        return bal, viol

    def point(self, x) -> OperatingPoint:
        g = self.grid
        L = len(self.case.ac_branches)
        v, th = x[self.v], x[self.th]
        flows = []
        for rev in (False, True):
            n, m = g.end_vars(rev)
            full_p, full_q = np.zeros(L), np.zeros(L)
            p, q = _flow_values(v[n], v[m], th[n] - th[m], g.g, g.b, g.b_sh)
            full_p[g.pos] = p
            full_q[g.pos] = q
            flows.append((full_p, full_q))
        fwd, bwd = x[self.fwd], x[self.bwd]
        return OperatingPoint(
            t=self.t, v=v.copy(), theta=th.copy(), p=x[self.p].copy(), q=x[self.q].copy(),
            beta=x[self.beta].copy(), beta_su=x[self.bsu].copy(), beta_sd=x[self.bsd].copy(),
            u_s=x[self.u].copy(), pc=self.pc.copy(),
            p_ac=flows[0][0], q_ac=flows[0][1], p_ac_rev=flows[1][0], q_ac_rev=flows[1][1],
            p_dc_fwd=fwd.copy(), p_dc_bwd=bwd.copy(),
            p_dc=fwd - (1 - self.eta) * bwd, p_dc_rev=bwd - (1 - self.eta) * fwd,
        )


def _solve_model(model: _SnapshotModel, max_iter: int = NLP_MAX_ITER):
    attempts = []
    best = None
    for name, x0 in (("warm", model.warm_start()), ("flat", model.flat_start())):
        res = pdipm(model.functions(), x0, tol=FEAS_TOL, max_iter=max_iter,
                    feas_tol=0.1 * FEAS_TOL)
        bal, viol = model.violations(res.x)
        ok = res.status == "converged" and bal <= FEAS_TOL and viol <= FEAS_TOL
        attempts.append({"start": name, "solver_status": res.status, "iterations": res.iterations,
                         "max_balance_residual": bal, "max_violation": viol})
        if ok:
            best = (name, res, bal, viol)
            break
    if best is not None:
        name, res, bal, viol = best
        status = "feasible-optimal"
    else:
        name, res = "flat", res
        bal, viol = attempts[-1]["max_balance_residual"], attempts[-1]["max_violation"]
        limit = all(a["solver_status"] == "iteration-limit" for a in attempts)
        status = "iteration-limit" if limit else "locally-infeasible"
    report = NlpReport(status, res.f, sum(a["iterations"] for a in attempts), name, bal, viol,
                       attempts)
    return model.point(res.x), report


def solve_ac_opf(case: NetworkCase, series: SnapshotSeries, t: int, initial: PlanSolution,
                 u_s=None, max_iter: int = NLP_MAX_ITER) -> tuple[OperatingPoint, NlpReport]:
    """Redispatch snapshot ``t`` on the fixed expansion of ``initial``.

    ``u_s`` overrides the source unit counts (the reinforcement pass feeds
    in its updated counts).
    """
    u = initial.u_s if u_s is None else u_s
    model = _SnapshotModel(case, series, t, initial, u, expand=False)
    return _solve_model(model, max_iter)


def solve_ac_gep(case: NetworkCase, series: SnapshotSeries, t: int, initial: PlanSolution,
                 u_s=None, max_iter: int = NLP_MAX_ITER
                 ) -> tuple[OperatingPoint, np.ndarray, NlpReport]:
    """Redispatch snapshot ``t`` and let non-storage sources grow.

    Returns the operating point, the unit-count increments over ``u_s`` and
    the solver report.
    """
    u = initial.u_s if u_s is None else np.asarray(u_s, dtype=float)
    model = _SnapshotModel(case, series, t, initial, u, expand=True)
    point, report = _solve_model(model, max_iter)
    inc = np.maximum(point.u_s - u, 0.0) if report.feasible else np.zeros_like(u)
    return point, inc, report


# -- certification -----------------------------------------------------------

@dataclass
class Certificate:
    t: int
    passed: bool
    stated_residual: float
    newton_status: str
    newton_mismatch: float
    slack_gap: float
    state_gap: float
    limit_violation: float


def certify_point(case: NetworkCase, series: SnapshotSeries, circuits, u_dc,
                  point: OperatingPoint, tol: float = FEAS_TOL) -> Certificate:
    """Check an operating point by two independent routes.

    First the stated voltages and setpoints are substituted into the exact
    nodal balances.  Then a Newton power flow is run from a flat start
    with the stated injections at PQ buses; it must reproduce the stated
    slack injections and state.  Operating limits are checked as well.
    """
    t = point.t
    grid = _grid(case, circuits)
    P_net, Q_net = net_injections(case, series, t, point.p, point.q, point.pc,
                                  point.p_dc, point.p_dc_rev)
    P, Q, ends = bus_flows(grid, point.v, point.theta)
    stated = float(np.max(np.abs(np.concatenate([P - P_net, Q - Q_net])))) if P.size else 0.0

    slack = reference_buses(case, circuits)
    v0 = np.ones(len(case.buses))
    v0[slack] = point.v[slack]
    th0 = np.zeros(len(case.buses))
    th0[slack] = point.theta[slack]
    pf = newton_power_flow(case, circuits, P_net, Q_net, v0, th0, slack)
    slack_gap = max(float(np.max(np.abs(pf.p_slack))) if len(slack) else 0.0,
                    float(np.max(np.abs(pf.q_slack))) if len(slack) else 0.0)
    state_gap = max(float(np.max(np.abs(pf.v - point.v))),
                    float(np.max(np.abs(pf.theta - point.theta))))

    viol = max(0.0, float(np.max(point.v - 1.1)), float(np.max(0.9 - point.v)))
    for p, q in ends:
        if grid.cap.size:
            viol = max(viol, float(np.max(np.sqrt(p * p + q * q) - grid.cap)))
    if grid.fb.size:
        dth = np.abs(point.theta[grid.fb] - point.theta[grid.tb]) - grid.theta_max
        viol = max(viol, float(np.max(dth)))
    for j, d in enumerate(case.dc_branches):
        cap = d.p_max * u_dc[j]
        viol = max(viol, abs(point.p_dc[j]) - cap, abs(point.p_dc_rev[j]) - cap)
    passed = (stated <= tol and pf.converged and slack_gap <= tol and state_gap <= 1e-4
              and viol <= tol)
    return Certificate(t, passed, stated, pf.status, pf.max_mismatch, slack_gap, state_gap, viol)
