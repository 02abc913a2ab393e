"""Post-solution analytics: loss audits, cost and mix summaries, tidy tables."""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from accep.formulation import FormulationKind, compare_loss_models, cosine_cut_coefficient
from accep.netmodel import NetworkCase, SnapshotSeries
from accep.plan import PlanSolution, cost_breakdown
from accep.reinforce import ReinforcementLog, account_redispatch

FICTITIOUS_TOL = 1e-5


class UnsupportedKind(ValueError):
    pass


@dataclass
class LossAudit:
    """Modelled branch losses against their analytical lower bound.

    One record per (branch, snapshot).  ``slack = model - bound``; records
    above :data:`FICTITIOUS_TOL` are non-physical dissipation.  For the
    tangent model the slack may dip below zero between tangent points;
    those records are marked ``below_bound`` instead.
    """

    kind: str
    branch: list[str] = field(default_factory=list)
    t: list[int] = field(default_factory=list)
    theta: np.ndarray = field(default_factory=lambda: np.zeros(0))
    model: np.ndarray = field(default_factory=lambda: np.zeros(0))
    bound: np.ndarray = field(default_factory=lambda: np.zeros(0))
    factor: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def slack(self) -> np.ndarray:
        return self.model - self.bound

    @property
    def fictitious(self) -> np.ndarray:
        return self.slack > FICTITIOUS_TOL

    @property
    def below_bound(self) -> np.ndarray:
        return self.slack < -FICTITIOUS_TOL

    def totals(self) -> dict[str, float]:
        s = self.slack
        return {
            "model": float(self.model.sum()),
            "bound": float(self.bound.sum()),
            "slack": float(s.sum()),
            "min_slack": float(s.min()) if s.size else 0.0,
            "flagged": int(self.fictitious.sum()),
        }

    def rows(self) -> list[dict]:
        s, fict, low = self.slack, self.fictitious, self.below_bound
        return [
            {"branch": b, "t": int(t), "theta": float(th), "model_loss": float(m),
             "bound": float(bd), "slack": float(sl), "fictitious": int(fi),
             "below_bound": int(lo), "loss_factor": float(fa)}
            for b, t, th, m, bd, sl, fi, lo, fa in zip(
                self.branch, self.t, self.theta, self.model, self.bound, s, fict, low,
                self.factor)
        ]


def audit_losses(case: NetworkCase, solution: PlanSolution, kind=None) -> LossAudit:
    """Compare each branch's modelled loss with its analytical lower bound.

    LPAC: both end flows summed against ``2 g k theta^2``; decoupled:
    ``p_loss`` against ``g theta^2``; tangent model: ``p_loss`` against
    ``r p^2``.  The parameters are those of the circuit counts the plan
    was solved with.
    """
    kind = FormulationKind.parse(kind if kind is not None else solution.kind)
    if kind is FormulationKind.DC:
        raise UnsupportedKind("the lossless DC model has no losses to audit")
    idx = case.bus_index()
    T = solution.T
    audit = LossAudit(kind.value)
    th_all, model, bound, factor = [], [], [], []
    for j, br in enumerate(case.ac_branches):
        par = br.parameters(float(solution.circuits[j]))
        th = solution.theta[idx[br.from_bus]] - solution.theta[idx[br.to_bus]]
        if kind is FormulationKind.LPAC:
            k = cosine_cut_coefficient(br.theta_max)
            m = solution.p_ac[j] + solution.p_ac_rev[j]
            b = 2.0 * par.g * k * th**2
        elif kind is FormulationKind.DECOUPLED:
            m = solution.p_loss[j]
            b = par.g * th**2
        else:
            m = solution.p_loss[j]
            b = par.r * solution.p_ac[j] ** 2
        fa = compare_loss_models(br.theta_max) if br.theta_max <= math.pi / 6 else math.nan
        audit.branch.extend([br.id] * T)
        audit.t.extend(range(T))
        th_all.append(th)
        model.append(m)
        bound.append(b)
        factor.append(np.full(T, fa))
    if th_all:
        audit.theta = np.concatenate(th_all)
        audit.model = np.concatenate(model)
        audit.bound = np.concatenate(bound)
        audit.factor = np.concatenate(factor)
    return audit


def energy_balance(case: NetworkCase, series: SnapshotSeries, plan: PlanSolution) -> np.ndarray:
    """Per-snapshot generation minus charging, load and branch losses."""
    load = np.zeros(series.T)
    for b in case.buses:
        load += series.p_load(b.id)
    gen = plan.p.sum(axis=0) - plan.pc.sum(axis=0)
    losses = (plan.p_ac + plan.p_ac_rev).sum(axis=0) + (plan.p_dc + plan.p_dc_rev).sum(axis=0)
    return gen - load - losses


def transmission_expansion(case: NetworkCase, plan: PlanSolution) -> dict[str, float]:
    """Added capacity times length, for AC lines and HVDC links."""
    ac = sum((u - br.u_min) * br.f_max * br.length_km
             for br, u in zip(case.ac_branches, plan.u_ac))
    dc = sum((u - d.u_min) * d.p_max * d.length_km for d, u in zip(case.dc_branches, plan.u_dc))
    return {"ac": float(ac), "dc": float(dc)}


def _carrier(s) -> str:
    return s.carrier or s.kind


def capacity_mix(case: NetworkCase, u_s: np.ndarray) -> dict[str, float]:
    """Installed rating by carrier; reactive-only sources count their ``q_max``."""
    out: dict[str, float] = defaultdict(float)
    for s, u in zip(case.sources, u_s):
        out[_carrier(s)] += float(u) * (s.p_max if s.p_max > 0 else s.q_max)
    return dict(sorted(out.items()))


def energy_mix(case: NetworkCase, plan: PlanSolution) -> dict[str, float]:
    out: dict[str, float] = defaultdict(float)
    e = plan.p * np.asarray(plan.delta)[None, :]
    for i, s in enumerate(case.sources):
        out[_carrier(s)] += float(e[i].sum())
    return dict(sorted(out.items()))


def storage_cycling(case: NetworkCase, plan: PlanSolution) -> dict[str, float]:
    delta = np.asarray(plan.delta)
    sto = [i for i, s in enumerate(case.sources) if s.is_storage]
    return {
        "charged": float(sum((plan.pc[i] * delta).sum() for i in sto)),
        "discharged": float(sum((plan.p[i] * delta).sum() for i in sto)),
    }


def summarize(case: NetworkCase, initial: PlanSolution, final: PlanSolution | None = None,
              rlog: ReinforcementLog | None = None) -> dict:
    """Headline numbers of a planning run, before and after reinforcement."""
    final = initial if final is None else final
    pos, neg = account_redispatch(initial, final)
    T = initial.T
    share = 1.0 - len(rlog.failing) / T if rlog is not None and T else None
    return {
        "ac_feasible_share": share,
        "redispatch": {"positive": pos, "negative": neg},
        "system_cost": {"initial": cost_breakdown(case, initial)["total"],
                        "final": cost_breakdown(case, final)["total"]},
        "transmission_expansion": transmission_expansion(case, final),
        "capacity_mix": {"initial": capacity_mix(case, initial.u_s),
                         "final": capacity_mix(case, final.u_s)},
        "energy_mix": energy_mix(case, final),
        "storage": storage_cycling(case, final),
    }


def tidy(summary: dict) -> list[dict]:
    """Flatten a nested summary into ``(table, key, value)`` rows."""
    rows: list[dict] = []

    def walk(prefix: list[str], node):
        if isinstance(node, dict):
            for k, v in node.items():
                walk(prefix + [str(k)], v)
        else:
            rows.append({"table": prefix[0], "key": ".".join(prefix[1:]),
                         "value": None if node is None else float(node)})

    for k, v in summary.items():
        walk([k], v)
    return rows


def summarize_tables(bundle) -> dict:
    """The :func:`summarize` numbers recomputed from a result bundle's tables.

    Works on the files alone: unit counts, costs and ratings come from
    ``plan.csv``, dispatch from ``dispatch.csv``, redispatch and unit
    increments from the reinforcement log.
    """
    obj = bundle.objective
    rlog = bundle.reinforcement_log or {}
    T = len(obj["delta"])
    plan = {(r["element"], r["id"]): r for r in bundle.plan}
    sources = [r for r in bundle.plan if r["element"] == "source"]
    inc = dict(zip(rlog.get("source_ids", ()), rlog.get("increments", ())))

    cost = sum(r["capital_cost"] * r["u"] for r in bundle.plan)
    energy: dict[str, float] = defaultdict(float)
    charged = discharged = 0.0
    for r in bundle.dispatch:
        if r["element"] != "source":
            continue
        src = plan[("source", r["id"])]
        e = r["p"] * r["delta"]
        cost += src["marginal_cost"] * e + src["startup_cost"] * (r["beta_su"] + r["beta_sd"])
        energy[src["carrier"]] += e
        if src["kind"] == "storage":
            charged += r["pc"] * r["delta"]
            discharged += e

    def mix(shift):
        out: dict[str, float] = defaultdict(float)
        for r in sources:
            rating = r["rating"] if r["rating"] > 0 else r["q_rating"]
            out[r["carrier"]] += (r["u"] - shift.get(r["id"], 0.0)) * rating
        return dict(sorted(out.items()))

    expansion = {"ac": 0.0, "dc": 0.0}
    for r in bundle.plan:
        if r["element"] in expansion:
            expansion[r["element"]] += (r["u"] - r["u_min"]) * r["rating"] * r["length_km"]
    initial_cost = obj.get("initial_breakdown", {}).get("total", cost)
    pos = float(np.sum(rlog.get("redispatch_pos", []))) if rlog else 0.0
    neg = float(np.sum(rlog.get("redispatch_neg", []))) if rlog else 0.0
    return {
        "ac_feasible_share": 1.0 - len(rlog["failing"]) / T if rlog and T else None,
        "redispatch": {"positive": pos, "negative": neg},
        "system_cost": {"initial": float(initial_cost), "final": float(cost)},
        "transmission_expansion": expansion,
        "capacity_mix": {"initial": mix(inc), "final": mix({})},
        "energy_mix": dict(sorted(energy.items())),
        "storage": {"charged": charged, "discharged": discharged},
    }
