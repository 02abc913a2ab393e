"""Transmission expansion by successive convex programming.

Line parameters depend on the number of circuits, which makes the planning
problem nonconvex.  The loop below freezes the parameters at the previous
expansion, re-solves, and stops once the expansion settles.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from accep.conic import DEFAULT_TOL, check_solution, solve
from accep.formulation import BuildOptions, FormulationKind, build_program
from accep.netmodel import NetworkCase, SnapshotSeries
from accep.plan import PlanSolution, extract_plan

log = logging.getLogger(__name__)


class ScpError(RuntimeError):
    """A convex solve inside the loop did not reach optimality."""

    def __init__(self, iteration: int, status: str, history: list[dict]):
        super().__init__(f"solver returned {status!r} at iteration {iteration}")
        self.iteration = iteration
        self.status = status
        self.history = history


@dataclass
class ScpState:
    k: int
    u: np.ndarray
    delta: float = math.inf
    objectives: list[float] = field(default_factory=list)


@dataclass(frozen=True)
class BlockingFlag:
    branch: str
    threshold: float
    u_min: float
    flagged: bool


def check_angle_blocking(case: NetworkCase) -> list[BlockingFlag]:
    """Flag AC branches whose angle limit already caps the flow at ``u_min``.

    For such a branch no amount of added circuits raises the usable
    capacity while the reactance is frozen, so expansion is blocked.
    """
    out = []
    for br in case.ac_branches:
        thr = br.theta_max / (br.x * br.a * br.f_max)
        out.append(BlockingFlag(br.id, thr, br.u_min, br.u_min >= thr))
    return out


def relative_change(u_new: np.ndarray, u_old: np.ndarray) -> float:
    diff = float(np.linalg.norm(u_new - u_old))
    norm = float(np.linalg.norm(u_new))
    if norm == 0.0:
        return 0.0 if diff == 0.0 else math.inf
    return diff / norm


def _solve_at(case, series, kind, u_prev, fixed, h, tol, backend):
    circuits = {br.id: float(u) for br, u in zip(case.ac_branches, u_prev)}
    opts = BuildOptions(h_tangents=h, circuits=circuits, fixed_ac=circuits if fixed else None)
    form = build_program(case, series, kind, opts)
    sol = solve(form.program, tol=tol, backend=backend)
    return form, sol


def run_scp(case: NetworkCase, series: SnapshotSeries, kind, tol: float = 0.05,
            max_iters: int = 20, h_tangents: int = 3, solver_tol: float = DEFAULT_TOL,
            backend: str = "ipm") -> PlanSolution:
    """Iterate expansion and parameter updates to a fixed point, then solve
    once more with the AC expansion fixed at the final iterate."""
    kind = FormulationKind.parse(kind)
    u_min = np.array([br.u_min for br in case.ac_branches], dtype=float)
    u_prev = u_min.copy()
    delta = math.inf
    history: list[dict] = []
    k = 0
    rising = 0
    guarded = False
    converged = True
    best = (math.inf, u_prev)
    while delta > tol:
        if k >= max_iters:
            converged = False
            break
        k += 1
        form, sol = _solve_at(case, series, kind, u_prev, False, h_tangents, solver_tol, backend)
        if not sol.optimal:
            history.append({"k": k, "delta": None, "objective": None, "status": sol.status})
            raise ScpError(k, sol.status, history)
        # interior-point iterates may sit a hair outside their bounds
        u_idx = form.catalog.u_ac
        u_new = np.clip(sol.value(u_idx).astype(float), form.program.lb[u_idx],
                        form.program.ub[u_idx])
        new_delta = relative_change(u_new, u_prev)
        rising = rising + 1 if new_delta > delta else 0
        delta = new_delta
        added = float(np.sum(u_new - u_min))
        history.append({"k": k, "delta": delta, "objective": sol.objective,
                        "circuits_added": added, "status": sol.status})
        log.info("scp k=%d delta=%.6g objective=%.10g circuits_added=%.6g",
                 k, delta, sol.objective, added)
        if delta < best[0]:
            best = (delta, u_new)
        if rising >= 3 and not guarded:
            # the iterates are drifting apart; damp once by averaging
            u_new = 0.5 * (u_new + u_prev)
            guarded = True
            rising = 0
            log.info("scp k=%d oscillation guard: averaged the last two iterates", k)
        u_prev = u_new
    if not converged:
        u_prev = best[1]
    form, sol = _solve_at(case, series, kind, u_prev, True, h_tangents, solver_tol, backend)
    if not sol.optimal:
        history.append({"k": k + 1, "delta": None, "objective": None, "status": sol.status})
        raise ScpError(k + 1, sol.status, history)
    plan = extract_plan(form, sol)
    plan.iterations = k
    plan.converged = converged
    plan.history = history
    plan.max_violation = check_solution(form.program, sol.x).max_violation
    return plan
