"""Solved capacity-expansion plans."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field, replace

import numpy as np

from accep.conic import Solution
from accep.netmodel import BranchParameters, NetworkCase


@dataclass
class PlanSolution:
    """Expansion, dispatch and flows of one plan.

    Per-snapshot arrays have shape ``(elements, T)``; storage-only arrays
    (``pc``, ``p_in``, ``e``) are zero for non-storage sources.  ``p_ac`` is
    the flow at the from-end of each AC branch, ``p_ac_rev`` at the to-end.
    """

    kind: str
    status: str
    objective: float
    source_ids: tuple[str, ...]
    ac_ids: tuple[str, ...]
    dc_ids: tuple[str, ...]
    bus_ids: tuple[str, ...]
    delta: np.ndarray
    u_s: np.ndarray
    u_ac: np.ndarray
    u_dc: np.ndarray
    p: np.ndarray
    q: np.ndarray
    beta: np.ndarray
    beta_su: np.ndarray
    pc: np.ndarray
    p_in: np.ndarray
    e: np.ndarray
    p_ac: np.ndarray
    p_ac_rev: np.ndarray
    q_ac: np.ndarray
    q_ac_rev: np.ndarray
    p_dc: np.ndarray
    p_dc_rev: np.ndarray
    p_dc_fwd: np.ndarray
    p_dc_bwd: np.ndarray
    theta: np.ndarray
    v: np.ndarray
    p_loss: np.ndarray
    q_dem: np.ndarray
    cos: np.ndarray
    circuits: np.ndarray
    iterations: int = 1
    converged: bool = True
    history: list[dict] = field(default_factory=list)
    duals: dict[str, np.ndarray] = field(default_factory=dict)
    max_violation: float = 0.0
    beta_sd: np.ndarray | None = None

    @property
    def T(self) -> int:
        return len(self.delta)

    def copy(self, **changes) -> "PlanSolution":
        out = replace(self, **changes)
        for name, val in vars(out).items():
            if isinstance(val, np.ndarray) and name not in changes:
                setattr(out, name, val.copy())
        return out

    def source_pos(self, sid: str) -> int:
        return self.source_ids.index(sid)


def cost_breakdown(case: NetworkCase, plan: PlanSolution) -> dict[str, float]:
    """Objective terms recomputed from the plan's tables."""
    delta = np.asarray(plan.delta, dtype=float)
    c_s = np.array([s.c for s in case.sources])
    o = np.array([s.o for s in case.sources])
    osu = np.array([s.o_su for s in case.sources])
    sd = plan.beta_sd if plan.beta_sd is not None else np.zeros_like(plan.beta)
    out = {
        "source_capital": float(c_s @ plan.u_s) if c_s.size else 0.0,
        "ac_capital": float(sum(br.c * u for br, u in zip(case.ac_branches, plan.u_ac))),
        "dc_capital": float(sum(d.c * u for d, u in zip(case.dc_branches, plan.u_dc))),
        "operation": float(np.sum(o[:, None] * plan.p * delta[None, :])) if o.size else 0.0,
        "startup": float(np.sum(osu[:, None] * plan.beta_su)) if osu.size else 0.0,
        "shutdown": float(np.sum(osu[:, None] * sd)) if osu.size else 0.0,
    }
    out["total"] = sum(out.values())
    return out


def reconstruct_angles(case: NetworkCase, params: list[BranchParameters],
                       p_ac: np.ndarray) -> np.ndarray:
    """Bus angles implied by lossless flows ``p = (th_n - th_m) / x`` along a
    spanning forest, with the lowest bus of every island at zero."""
    N, T = len(case.buses), p_ac.shape[1] if p_ac.ndim == 2 else 0
    idx = case.bus_index()
    adj: list[list[tuple[int, int, float]]] = [[] for _ in range(N)]
    for j, br in enumerate(case.ac_branches):
        f, t = idx[br.from_bus], idx[br.to_bus]
        adj[f].append((j, t, 1.0))
        adj[t].append((j, f, -1.0))
    theta = np.zeros((N, T))
    seen = np.zeros(N, dtype=bool)
    for root in range(N):
        if seen[root]:
            continue
        seen[root] = True
        queue = deque([root])
        while queue:
            n = queue.popleft()
            for j, m, sign in sorted(adj[n]):
                if not seen[m]:
                    seen[m] = True
                    # sign=+1: n is the from-bus, th_n - th_m = x p
                    theta[m] = theta[n] - sign * params[j].x * p_ac[j]
                    queue.append(m)
    return theta


def extract_plan(form, sol: Solution) -> PlanSolution:
    """Read a :class:`PlanSolution` off a solved formulation."""
    case, cat, series = form.case, form.catalog, form.series
    T = series.T
    S = len(case.sources)
    L = len(case.ac_branches)

    def val(idx, shape):
        idx = np.asarray(idx)
        if idx.size == 0:
            return np.zeros(shape)
        return sol.value(idx).reshape(idx.shape)

    def per_source(idx):
        out = np.zeros((S, T))
        if cat.storage.size:
            out[cat.storage] = val(idx, (cat.storage.size, T))
        return out

    kind = form.kind
    p_ac = val(cat.p_ac, (L, T))
    p_loss = val(cat.p_loss, (L, T))
    if kind.reactive:
        p_rev = val(cat.p_ac_rev, (L, T))
        theta = val(cat.theta, (len(case.buses), T))
        v = val(cat.v, (len(case.buses), T))
    else:
        p_rev = -p_ac
        theta = reconstruct_angles(case, form.params, p_ac)
        v = np.ones((len(case.buses), T))
    duals = {}
    for tag in form.program.tags:
        d = sol.duals(tag)
        if d is not None:
            duals[tag] = d
    return PlanSolution(
        kind=kind.value, status=sol.status, objective=sol.objective,
        source_ids=tuple(s.id for s in case.sources),
        ac_ids=tuple(br.id for br in case.ac_branches),
        dc_ids=tuple(d.id for d in case.dc_branches),
        bus_ids=tuple(b.id for b in case.buses),
        delta=np.asarray(series.delta, dtype=float).copy(),
        u_s=val(cat.u_s, (S,)), u_ac=val(cat.u_ac, (L,)),
        u_dc=val(cat.u_dc, (len(case.dc_branches),)),
        p=val(cat.p, (S, T)), q=val(cat.q, (S, T)),
        beta=val(cat.beta, (S, T)), beta_su=val(cat.beta_su, (S, T)),
        pc=per_source(cat.pc), p_in=per_source(cat.p_in), e=per_source(cat.e),
        p_ac=p_ac, p_ac_rev=p_rev,
        q_ac=val(cat.q_ac, (L, T)), q_ac_rev=val(cat.q_ac_rev, (L, T)),
        p_dc=val(cat.p_dc, (len(case.dc_branches), T)),
        p_dc_rev=val(cat.p_dc_rev, (len(case.dc_branches), T)),
        p_dc_fwd=val(cat.p_dc_fwd, (len(case.dc_branches), T)),
        p_dc_bwd=val(cat.p_dc_bwd, (len(case.dc_branches), T)),
        theta=theta, v=v, p_loss=p_loss, q_dem=val(cat.q_dem, (L, T)),
        cos=val(cat.cos, (L, T)) if kind.value == "lpac" else np.ones((L, T)),
        circuits=np.asarray(form.circuits, dtype=float).copy(),
        duals=duals,
    )
