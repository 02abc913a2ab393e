"""Restore AC feasibility of a convex plan snapshot by snapshot.

Every snapshot is first redispatched on the plan's expansion with the
exact AC equations.  Snapshots without a solution are then visited in
order: a redispatch is retried with the units added so far, and only if
that still fails may non-storage sources grow.  Added units carry over to
all later snapshots.
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from accep.acfeas import (
    Certificate,
    NlpReport,
    OperatingPoint,
    certify_point,
    solve_ac_gep,
    solve_ac_opf,
)
from accep.netmodel import NetworkCase, SnapshotSeries
from accep.plan import PlanSolution, cost_breakdown

log = logging.getLogger(__name__)


class ReinforcementError(RuntimeError):
    """Generation expansion found no AC solution for a snapshot."""

    def __init__(self, t: int, report: NlpReport, log_: "ReinforcementLog"):
        super().__init__(f"no AC-feasible reinforcement for snapshot {t} ({report.status})")
        self.t = t
        self.report = report
        self.log = log_


@dataclass
class SnapshotRecord:
    t: int
    outcome: str  # opf-feasible | gep-reinforced
    screening_status: str
    retry_status: str
    gep_status: str | None
    increments: dict[str, float]
    beta_sd: dict[str, float]
    objective: float


@dataclass
class ReinforcementLog:
    """What happened to each snapshot that failed screening."""

    source_ids: tuple[str, ...]
    failing: list[int] = field(default_factory=list)
    records: list[SnapshotRecord] = field(default_factory=list)
    increments: list[float] = field(default_factory=list)  # cumulative, per source
    redispatch_pos: list[list[float]] = field(default_factory=list)  # S x T energy
    redispatch_neg: list[list[float]] = field(default_factory=list)
    beta_sd: list[list[float]] = field(default_factory=list)
    certificates: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ReinforcementLog":
        d = dict(d)
        d["source_ids"] = tuple(d["source_ids"])
        d["records"] = [SnapshotRecord(**r) for r in d.get("records", [])]
        return cls(**d)

    def outcome(self, t: int) -> str | None:
        for r in self.records:
            if r.t == t:
                return r.outcome
        return None

    @property
    def all_certified(self) -> bool:
        return bool(self.certificates) and all(c["passed"] for c in self.certificates)


def _opf_task(args):
    case, series, t, initial = args
    return solve_ac_opf(case, series, t, initial)


def _screen(case: NetworkCase, series: SnapshotSeries, initial: PlanSolution,
            workers: int = 1) -> list[tuple[OperatingPoint, NlpReport]]:
    tasks = [(case, series, t, initial) for t in range(series.T)]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_opf_task, tasks))
    return [_opf_task(a) for a in tasks]


def screen_snapshots(case: NetworkCase, series: SnapshotSeries, initial: PlanSolution,
                     workers: int = 1) -> list[int]:
    """Snapshots whose AC redispatch on the initial expansion has no solution."""
    results = _screen(case, series, initial, workers)
    return [t for t, (_, rep) in enumerate(results) if not rep.feasible]


def _assemble(initial: PlanSolution, points: list[OperatingPoint], u_s: np.ndarray
              ) -> PlanSolution:
    out = initial.copy()
    out.status = "ac-reinforced"
    out.u_s = u_s.copy()
    out.beta_sd = np.zeros_like(initial.beta)
    for pt in points:
        t = pt.t
        out.p[:, t], out.q[:, t] = pt.p, pt.q
        out.beta[:, t], out.beta_su[:, t], out.beta_sd[:, t] = pt.beta, pt.beta_su, pt.beta_sd
        out.v[:, t], out.theta[:, t] = pt.v, pt.theta
        out.p_ac[:, t], out.p_ac_rev[:, t] = pt.p_ac, pt.p_ac_rev
        out.q_ac[:, t], out.q_ac_rev[:, t] = pt.q_ac, pt.q_ac_rev
        out.p_dc_fwd[:, t], out.p_dc_bwd[:, t] = pt.p_dc_fwd, pt.p_dc_bwd
        out.p_dc[:, t], out.p_dc_rev[:, t] = pt.p_dc, pt.p_dc_rev
        # exact series losses and reactive consumption of each branch
        out.p_loss[:, t] = pt.p_ac + pt.p_ac_rev
        out.q_dem[:, t] = pt.q_ac + pt.q_ac_rev
    return out


def account_redispatch(initial: PlanSolution, final: PlanSolution,
                       per_element: bool = False):
    """Upward and downward dispatch energy between two plans.

    Returns ``(pos, neg)`` with ``neg <= 0``; with ``per_element`` the
    ``(S, T)`` arrays are returned instead of totals.
    """
    d = (final.p - initial.p) * np.asarray(initial.delta)[None, :]
    pos = np.maximum(d, 0.0)
    neg = np.minimum(d, 0.0)
    if per_element:
        return pos, neg
    return float(pos.sum()), float(neg.sum())


def reinforce(case: NetworkCase, series: SnapshotSeries, initial: PlanSolution,
              workers: int = 1) -> tuple[PlanSolution, ReinforcementLog]:
    """Make ``initial`` AC-feasible in every snapshot.

    Raises :class:`ReinforcementError` carrying the partial log if
    generation expansion fails for some snapshot.
    """
    S = len(case.sources)
    ids = tuple(s.id for s in case.sources)
    results = _screen(case, series, initial, workers)
    points = [pt for pt, _ in results]
    failing = [t for t, (_, rep) in enumerate(results) if not rep.feasible]
    rlog = ReinforcementLog(source_ids=ids, failing=list(failing))
    log.info("screening: %d of %d snapshots without AC solution", len(failing), series.T)

    u_star = np.asarray(initial.u_s, dtype=float).copy()
    for t in failing:
        pt, rep = solve_ac_opf(case, series, t, initial, u_s=u_star)
        if rep.feasible:
            points[t] = pt
            rlog.records.append(SnapshotRecord(
                t, "opf-feasible", results[t][1].status, rep.status, None,
                {}, _named(ids, pt.beta_sd), rep.objective))
            log.info("snapshot %d: redispatch succeeded on retry", t)
            continue
        gpt, inc, grep = solve_ac_gep(case, series, t, initial, u_s=u_star)
        if not grep.feasible:
            rlog.increments = (u_star - initial.u_s).tolist()
            rlog.records.append(SnapshotRecord(
                t, "failed", results[t][1].status, rep.status, grep.status,
                {}, {}, grep.objective))
            raise ReinforcementError(t, grep, rlog)
        u_star = np.maximum(u_star, gpt.u_s)
        points[t] = gpt
        rlog.records.append(SnapshotRecord(
            t, "gep-reinforced", results[t][1].status, rep.status, grep.status,
            _named(ids, inc), _named(ids, gpt.beta_sd), grep.objective))
        log.info("snapshot %d: reinforced, %d sources grew", t, int(np.sum(inc > 0)))

    final = _assemble(initial, points, u_star)
    final.objective = cost_breakdown(case, final)["total"]
    rlog.increments = (u_star - initial.u_s).tolist() if S else []
    pos, neg = account_redispatch(initial, final, per_element=True)
    rlog.redispatch_pos = pos.tolist()
    rlog.redispatch_neg = neg.tolist()
    rlog.beta_sd = final.beta_sd.tolist()
    for pt in points:
        cert = certify_point(case, series, final.u_ac, final.u_dc, pt)
        rlog.certificates.append(_cert_dict(cert))
    return final, rlog


def _named(ids, values) -> dict[str, float]:
    return {sid: float(v) for sid, v in zip(ids, values) if v > 1e-12}


def _cert_dict(c: Certificate) -> dict:
    d = asdict(c)
    d["passed"] = bool(d["passed"])
    return {k: (float(v) if isinstance(v, (np.floating, float)) else v) for k, v in d.items()}
