"""Case files and result bundles.

A case is one JSON document (``schema_version`` 1).  Snapshot series are
inline or live in a CSV next to it with columns ``delta``, ``load_p:<bus>``,
``load_q:<bus>``, ``avail:<profile>`` and ``inflow:<profile>``.  Results are
a fixed set of CSV/JSON files; every number is written with 17 significant
digits so that reading back reproduces the same floats.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema
import numpy as np

from accep.netmodel import (
    AcBranch,
    Bus,
    CapabilityCurve,
    DcBranch,
    NetworkCase,
    PowerSource,
    SnapshotSeries,
    Violation,
    attach_vsc_compensators,
    derive_reactive_loads,
    hvdc_loss_factor,
    validate_case,
)
from accep.plan import PlanSolution, cost_breakdown

SCHEMA_VERSION = 1


class CaseError(ValueError):
    """Base class for problems with a case file."""


class CaseParseError(CaseError):
    def __init__(self, msg: str, line: int, column: int):
        super().__init__(f"{msg} at line {line}, column {column}")
        self.line = line
        self.column = column


class SchemaVersionError(CaseError):
    pass


class UnknownKeyError(CaseError):
    def __init__(self, key: str, where: str):
        super().__init__(f"unknown key {key!r} in {where or 'case'}")
        self.key = key


class DanglingReferenceError(CaseError):
    pass


class CaseSchemaError(CaseError):
    pass


class CaseValidationError(CaseError):
    def __init__(self, violations: list[Violation]):
        super().__init__("; ".join(str(v) for v in violations))
        self.violations = violations


# -- schema ------------------------------------------------------------------

_NUM = {"type": "number"}
_STR = {"type": "string"}
_SERIES = {"type": "object", "additionalProperties": {"type": "array", "items": _NUM}}


def _obj(props: dict, required: tuple = ()) -> dict:
    return {"type": "object", "properties": props, "required": list(required),
            "additionalProperties": False}


_COSTS = {"u_min": _NUM, "u_max": _NUM, "c": _NUM}

CASE_SCHEMA = _obj({
    "schema_version": {"type": "integer"},
    "name": _STR,
    "base_mva": _NUM,
    "buses": {"type": "array", "items": _obj({"id": _STR, "v_nom": _STR, "island": _STR},
                                             ("id",))},
    "ac_branches": {"type": "array", "items": _obj({
        "id": _STR, "from_bus": _STR, "to_bus": _STR, "r": _NUM, "x": _NUM, "b_sh": _NUM,
        "f_max": _NUM, "a": _NUM, "theta_max": _NUM, "length_km": _NUM, **_COSTS,
    }, ("id", "from_bus", "to_bus", "r", "x"))},
    "dc_branches": {"type": "array", "items": _obj({
        "id": _STR, "from_bus": _STR, "to_bus": _STR, "p_max": _NUM, "length_km": _NUM,
        "eta": _NUM, "converter": {"enum": ["lcc", "vsc"]}, **_COSTS,
    }, ("id", "from_bus", "to_bus", "p_max"))},
    "sources": {"type": "array", "items": _obj({
        "id": _STR, "bus": _STR, "kind": {"enum": ["SG", "IBR", "compensator"]},
        "carrier": _STR, "p_min": _NUM, "p_max": _NUM, "q_min": _NUM, "q_max": _NUM,
        "capability": _STR, "o": _NUM, "o_su": _NUM, "availability": _STR, **_COSTS,
    }, ("id", "bus", "kind"))},
    "storage": {"type": "array", "items": _obj({
        "id": _STR, "bus": _STR, "carrier": _STR, "p_max": _NUM, "q_min": _NUM,
        "q_max": _NUM, "capability": _STR, "o": _NUM, "e_max": _NUM, "eta_dis": _NUM,
        "eta_chg": _NUM, "inflow": _STR, **_COSTS,
    }, ("id", "bus"))},
    "capability_presets": {"type": "object", "additionalProperties": _obj({
        "preset": {"enum": ["d-curve", "u-shape", "triangle", "rectangle"]},
        "cos_phi": _NUM,
        "upper": {"type": "array", "items": {"type": "array", "items": _NUM,
                                             "minItems": 2, "maxItems": 2}},
        "lower": {"type": "array", "items": {"type": "array", "items": _NUM,
                                             "minItems": 2, "maxItems": 2}},
        "q_min_frac": _NUM, "q_max_frac": _NUM,
    })},
    "snapshots": _obj({
        "path": _STR, "delta": {"type": "array", "items": _NUM},
        "load_p": _SERIES, "load_q": _SERIES, "availability": _SERIES, "inflow": _SERIES,
    }),
    "solver": _obj({"tol": _NUM, "backend": {"enum": ["ipm", "clarabel"]},
                    "h_tangents": {"type": "integer"}, "scp_tol": _NUM,
                    "max_iters": {"type": "integer"}}),
    "scenario": _obj({"power_factor": _NUM, "vsc_compensators": {"type": "boolean"},
                      "hvdc_loss_per_1000km": _NUM, "load_scale": _NUM}),
}, ("schema_version", "buses", "snapshots"))


@dataclass
class CaseFile:
    case: NetworkCase
    series: SnapshotSeries
    solver: dict = field(default_factory=dict)
    scenario: dict = field(default_factory=dict)


def _schema_error(err: jsonschema.ValidationError) -> CaseError:
    where = "/".join(str(p) for p in err.absolute_path)
    if err.validator == "additionalProperties":
        allowed = set(err.schema.get("properties", {}))
        extra = sorted(set(err.instance) - allowed)
        if extra:
            return UnknownKeyError(extra[0], where)
    return CaseSchemaError(f"{where or 'case'}: {err.message}")


def _capability(name: str | None, presets: dict, default: str) -> CapabilityCurve:
    name = name or default
    if name in presets:
        spec = presets[name]
        if "preset" in spec:
            return CapabilityCurve.from_preset(spec["preset"], spec.get("cos_phi", 0.95))
        return CapabilityCurve(
            upper=tuple(tuple(x) for x in spec.get("upper", ())),
            lower=tuple(tuple(x) for x in spec.get("lower", ())),
            preset=name, q_min_frac=spec.get("q_min_frac", -0.4),
            q_max_frac=spec.get("q_max_frac", 0.4))
    try:
        return CapabilityCurve.from_preset(name)
    except ValueError:
        raise DanglingReferenceError(f"unknown capability curve {name!r}") from None


_DEFAULT_CURVE = {"SG": "d-curve", "IBR": "triangle", "compensator": "rectangle",
                  "storage": "rectangle"}


def _source(d: dict, kind: str, presets: dict) -> PowerSource:
    cap = _capability(d.get("capability"), presets, _DEFAULT_CURVE[kind])
    p_max = float(d.get("p_max", 0.0))
    base = p_max if p_max > 0 else 1.0
    extra = {}
    if kind == "storage":
        extra = dict(e_max=d.get("e_max", 0.0), eta_dis=d.get("eta_dis", 1.0),
                     eta_chg=d.get("eta_chg", 1.0), inflow=d.get("inflow"))
    return PowerSource(
        id=d["id"], bus=d["bus"], kind=kind, carrier=d.get("carrier", ""),
        p_min=d.get("p_min", 0.0), p_max=p_max,
        q_min=d.get("q_min", cap.q_min_frac * base), q_max=d.get("q_max", cap.q_max_frac * base),
        capability=cap, u_min=d.get("u_min", 0.0), u_max=d.get("u_max", 0.0),
        c=d.get("c", 0.0), o=d.get("o", 0.0), o_su=d.get("o_su", 0.0),
        availability=d.get("availability"), **extra)


def _read_series_csv(path: Path) -> dict:
    out: dict = {"delta": [], "load_p": {}, "load_q": {}, "availability": {}, "inflow": {}}
    prefixes = {"load_p": "load_p", "load_q": "load_q", "avail": "availability",
                "inflow": "inflow"}
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        return out
    for col in rows[0]:
        vals = [float(r[col]) for r in rows]
        if col == "delta":
            out["delta"] = vals
        elif col == "t":
            continue
        elif ":" in col and col.split(":", 1)[0] in prefixes:
            pre, key = col.split(":", 1)
            out[prefixes[pre]][key] = vals
        else:
            raise UnknownKeyError(col, str(path))
    return out


def _check_refs(doc: dict, snaps: dict) -> None:
    buses = {b["id"] for b in doc["buses"]}
    T = len(snaps["delta"])
    for sec in ("ac_branches", "dc_branches"):
        for br in doc.get(sec, []):
            for end in ("from_bus", "to_bus"):
                if br[end] not in buses:
                    raise DanglingReferenceError(f"{sec} {br['id']!r}: unknown bus {br[end]!r}")
    for sec, key, table in (("sources", "availability", "availability"),
                            ("storage", "inflow", "inflow")):
        for s in doc.get(sec, []):
            if s["bus"] not in buses:
                raise DanglingReferenceError(f"{sec} {s['id']!r}: unknown bus {s['bus']!r}")
            ref = s.get(key)
            if ref is not None and ref not in snaps[table]:
                raise DanglingReferenceError(f"{sec} {s['id']!r}: unknown {key} profile {ref!r}")
    for table in ("load_p", "load_q", "availability", "inflow"):
        for key, vals in snaps[table].items():
            if table.startswith("load") and key not in buses:
                raise DanglingReferenceError(f"snapshots {table}: unknown bus {key!r}")
            if len(vals) != T:
                raise DanglingReferenceError(
                    f"snapshots {table}[{key!r}] has length {len(vals)}, expected T={T}")


def parse_case(text: str, base_dir: Path | str = ".") -> CaseFile:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CaseParseError(exc.msg, exc.lineno, exc.colno) from None
    if not isinstance(doc, dict):
        raise CaseSchemaError("case must be a JSON object")
    ver = doc.get("schema_version")
    if ver != SCHEMA_VERSION:
        raise SchemaVersionError(f"schema_version {ver!r} is not supported "
                                 f"(expected {SCHEMA_VERSION})")
    errors = sorted(jsonschema.Draft7Validator(CASE_SCHEMA).iter_errors(doc),
                    key=lambda e: list(e.absolute_path))
    if errors:
        raise _schema_error(errors[0])

    snaps = {"delta": [], "load_p": {}, "load_q": {}, "availability": {}, "inflow": {}}
    sdoc = doc["snapshots"]
    if "path" in sdoc:
        snaps.update(_read_series_csv(Path(base_dir) / sdoc["path"]))
    for k in ("load_p", "load_q", "availability", "inflow"):
        snaps[k] = {**snaps[k], **sdoc.get(k, {})}
    if "delta" in sdoc:
        snaps["delta"] = sdoc["delta"]
    _check_refs(doc, snaps)

    scenario = dict(doc.get("scenario", {}))
    solver = dict(doc.get("solver", {}))
    presets = doc.get("capability_presets", {})
    per_km = scenario.get("hvdc_loss_per_1000km", 0.03)
    buses = tuple(Bus(b["id"], b.get("v_nom", ""), b.get("island", "main"))
                  for b in doc["buses"])
    ac = tuple(AcBranch(
        id=d["id"], from_bus=d["from_bus"], to_bus=d["to_bus"], r=d["r"], x=d["x"],
        b_sh=d.get("b_sh", 0.0), f_max=d.get("f_max", 1.0), a=d.get("a", 1.0),
        theta_max=d.get("theta_max", math.pi / 6), u_min=d.get("u_min", 1.0),
        u_max=d.get("u_max", d.get("u_min", 1.0)), c=d.get("c", 0.0),
        length_km=d.get("length_km", 0.0)) for d in doc.get("ac_branches", []))
    dc = tuple(DcBranch(
        id=d["id"], from_bus=d["from_bus"], to_bus=d["to_bus"], p_max=d["p_max"],
        length_km=d.get("length_km", 0.0),
        eta=d.get("eta", hvdc_loss_factor(d.get("length_km", 0.0), per_km)),
        converter=d.get("converter", "lcc"), u_min=d.get("u_min", 1.0),
        u_max=d.get("u_max", d.get("u_min", 1.0)), c=d.get("c", 0.0))
        for d in doc.get("dc_branches", []))
    sources = tuple(_source(d, d["kind"], presets) for d in doc.get("sources", []))
    sources += tuple(_source(d, "storage", presets) for d in doc.get("storage", []))
    case = NetworkCase(doc.get("name", "case"), buses, ac, dc, sources,
                       doc.get("base_mva", 100.0))
    if scenario.get("vsc_compensators", True):
        case = attach_vsc_compensators(case)

    T = len(snaps["delta"])
    pf = scenario.get("power_factor", 0.99)
    scale = scenario.get("load_scale", 1.0)
    load_p = {k: np.asarray(v, dtype=float) * scale for k, v in snaps["load_p"].items()}
    load_q = {k: derive_reactive_loads(v, pf) for k, v in load_p.items()}
    load_q.update({k: np.asarray(v, dtype=float) * scale for k, v in snaps["load_q"].items()})
    series = SnapshotSeries(
        np.asarray(snaps["delta"], dtype=float).reshape(T), load_p, load_q,
        {k: np.asarray(v, dtype=float) for k, v in snaps["availability"].items()},
        {k: np.asarray(v, dtype=float) for k, v in snaps["inflow"].items()})
    violations = validate_case(case, series)
    if violations:
        raise CaseValidationError(violations)
    return CaseFile(case, series, solver, scenario)


def load_case_file(path: Path | str) -> CaseFile:
    path = Path(path)
    return parse_case(path.read_text(), path.parent)


def load_case(path: Path | str) -> tuple[NetworkCase, SnapshotSeries]:
    cf = load_case_file(path)
    return cf.case, cf.series


def dump_case(case: NetworkCase, series: SnapshotSeries, solver: dict | None = None,
              scenario: dict | None = None) -> dict:
    """JSON document for ``case`` with inline snapshots.

    Reactive loads are written explicitly; VSC terminal sources are left
    out because loading regenerates them.
    """
    presets: dict = {}

    def curve_name(s: PowerSource) -> str:
        cap = s.capability
        if cap.preset == "triangle":
            tan_phi = cap.q_max_frac
            cos_phi = math.cos(math.atan(tan_phi))
            name = f"triangle_{cos_phi:.6g}"
            presets[name] = {"preset": "triangle", "cos_phi": cos_phi}
            return name
        if cap.preset in ("d-curve", "u-shape", "rectangle"):
            return cap.preset
        presets[cap.preset] = {"upper": [list(x) for x in cap.upper],
                               "lower": [list(x) for x in cap.lower],
                               "q_min_frac": cap.q_min_frac, "q_max_frac": cap.q_max_frac}
        return cap.preset

    def src(s: PowerSource) -> dict:
        d = {"id": s.id, "bus": s.bus, "carrier": s.carrier, "p_max": s.p_max,
             "q_min": s.q_min, "q_max": s.q_max, "capability": curve_name(s),
             "u_min": s.u_min, "u_max": s.u_max, "c": s.c, "o": s.o}
        if s.is_storage:
            d.update(e_max=s.e_max, eta_dis=s.eta_dis, eta_chg=s.eta_chg)
            if s.inflow is not None:
                d["inflow"] = s.inflow
        else:
            d.update(kind=s.kind, p_min=s.p_min, o_su=s.o_su)
            if s.availability is not None:
                d["availability"] = s.availability
        return d

    own = [s for s in case.sources if s.linked_branch is None]
    doc = {
        "schema_version": SCHEMA_VERSION,
        "name": case.name,
        "base_mva": case.base_mva,
        "buses": [{"id": b.id, "v_nom": b.v_nom, "island": b.island} for b in case.buses],
        "ac_branches": [{k: getattr(br, k) for k in (
            "id", "from_bus", "to_bus", "r", "x", "b_sh", "f_max", "a", "theta_max",
            "u_min", "u_max", "c", "length_km")} for br in case.ac_branches],
        "dc_branches": [{k: getattr(d, k) for k in (
            "id", "from_bus", "to_bus", "p_max", "length_km", "eta", "converter",
            "u_min", "u_max", "c")} for d in case.dc_branches],
        "sources": [src(s) for s in own if not s.is_storage],
        "storage": [src(s) for s in own if s.is_storage],
    }
    doc["capability_presets"] = presets
    doc["snapshots"] = {
        "delta": [float(x) for x in series.delta],
        "load_p": {k: [float(x) for x in v] for k, v in series.load_p.items()},
        "load_q": {k: [float(x) for x in v] for k, v in series.load_q.items()},
        "availability": {k: [float(x) for x in v] for k, v in series.availability.items()},
        "inflow": {k: [float(x) for x in v] for k, v in series.inflow.items()},
    }
    if solver:
        doc["solver"] = dict(solver)
    if scenario:
        doc["scenario"] = dict(scenario)
    return doc


def save_case(path: Path | str, case: NetworkCase, series: SnapshotSeries, **kw) -> None:
    Path(path).write_text(json.dumps(dump_case(case, series, **kw), indent=1) + "\n")


# -- result bundles ------------------------------------------------------------

PLAN_COLUMNS = ("element", "id", "kind", "carrier", "bus", "from_bus", "to_bus", "u_min",
                "u_max", "u", "circuits", "rating", "q_rating", "length_km", "capital_cost",
                "marginal_cost", "startup_cost")
DISPATCH_COLUMNS = ("element", "id", "t", "delta", "p", "q", "beta", "beta_su", "beta_sd",
                    "pc", "p_in", "e", "v", "theta", "load_p", "load_q")
FLOW_COLUMNS = ("element", "id", "t", "p", "p_rev", "q", "q_rev", "p_fwd", "p_bwd",
                "p_loss", "q_dem", "cos", "theta")
AUDIT_COLUMNS = ("branch", "t", "theta", "model_loss", "bound", "slack", "fictitious",
                 "below_bound", "loss_factor")
_TEXT = {"element", "id", "kind", "carrier", "bus", "from_bus", "to_bus", "branch"}
_INT = {"t", "fictitious", "below_bound"}
RESULT_FILES = ("plan.csv", "dispatch.csv", "flows.csv", "objective.json", "loss_audit.csv",
                "reinforcement_log.json")


@dataclass
class ResultBundle:
    """Canonical table form of a solved plan."""

    plan: list[dict]
    dispatch: list[dict]
    flows: list[dict]
    objective: dict
    loss_audit: list[dict] = field(default_factory=list)
    reinforcement_log: dict = field(default_factory=dict)


def _row(columns, **vals) -> dict:
    return {c: vals.get(c) for c in columns}


def bundle_from_plan(case: NetworkCase, series: SnapshotSeries, plan: PlanSolution,
                     audit=None, log=None, initial: PlanSolution | None = None) -> ResultBundle:
    T = plan.T
    idx = case.bus_index()
    rows = []
    for i, s in enumerate(case.sources):
        rows.append(_row(PLAN_COLUMNS, element="source", id=s.id, kind=s.kind,
                         carrier=s.carrier or s.kind, bus=s.bus, u_min=s.u_min, u_max=s.u_max,
                         u=float(plan.u_s[i]), rating=s.p_max, q_rating=s.q_max,
                         capital_cost=s.c, marginal_cost=s.o, startup_cost=s.o_su))
    for j, br in enumerate(case.ac_branches):
        rows.append(_row(PLAN_COLUMNS, element="ac", id=br.id, kind="ac", carrier="ac",
                         from_bus=br.from_bus, to_bus=br.to_bus, u_min=br.u_min,
                         u_max=br.u_max, u=float(plan.u_ac[j]),
                         circuits=float(plan.circuits[j]), rating=br.f_max,
                         length_km=br.length_km, capital_cost=br.c))
    for j, d in enumerate(case.dc_branches):
        rows.append(_row(PLAN_COLUMNS, element="dc", id=d.id, kind=d.converter, carrier="dc",
                         from_bus=d.from_bus, to_bus=d.to_bus, u_min=d.u_min, u_max=d.u_max,
                         u=float(plan.u_dc[j]), rating=d.p_max, length_km=d.length_km,
                         capital_cost=d.c))
    sd = plan.beta_sd if plan.beta_sd is not None else np.zeros_like(plan.beta)
    dispatch = []
    for t in range(T):
        for i, s in enumerate(case.sources):
            dispatch.append(_row(
                DISPATCH_COLUMNS, element="source", id=s.id, t=t, delta=float(plan.delta[t]),
                p=float(plan.p[i, t]), q=float(plan.q[i, t]), beta=float(plan.beta[i, t]),
                beta_su=float(plan.beta_su[i, t]), beta_sd=float(sd[i, t]),
                pc=float(plan.pc[i, t]), p_in=float(plan.p_in[i, t]), e=float(plan.e[i, t])))
        for n, b in enumerate(case.buses):
            dispatch.append(_row(
                DISPATCH_COLUMNS, element="bus", id=b.id, t=t, delta=float(plan.delta[t]),
                v=float(plan.v[n, t]), theta=float(plan.theta[n, t]),
                load_p=float(series.p_load(b.id)[t]), load_q=float(series.q_load(b.id)[t])))
    flows = []
    for t in range(T):
        for j, br in enumerate(case.ac_branches):
            th = plan.theta[idx[br.from_bus], t] - plan.theta[idx[br.to_bus], t]
            flows.append(_row(
                FLOW_COLUMNS, element="ac", id=br.id, t=t, p=float(plan.p_ac[j, t]),
                p_rev=float(plan.p_ac_rev[j, t]), q=float(plan.q_ac[j, t]),
                q_rev=float(plan.q_ac_rev[j, t]), p_loss=float(plan.p_loss[j, t]),
                q_dem=float(plan.q_dem[j, t]), cos=float(plan.cos[j, t]), theta=float(th)))
        for j, d in enumerate(case.dc_branches):
            flows.append(_row(
                FLOW_COLUMNS, element="dc", id=d.id, t=t, p=float(plan.p_dc[j, t]),
                p_rev=float(plan.p_dc_rev[j, t]), p_fwd=float(plan.p_dc_fwd[j, t]),
                p_bwd=float(plan.p_dc_bwd[j, t])))
    objective = {
        "kind": plan.kind,
        "status": plan.status,
        "objective": float(plan.objective),
        "breakdown": cost_breakdown(case, plan),
        "delta": [float(x) for x in plan.delta],
        "iterations": int(plan.iterations),
        "converged": bool(plan.converged),
        "max_violation": float(plan.max_violation),
        "history": plan.history,
    }
    if initial is not None:
        objective["initial_breakdown"] = cost_breakdown(case, initial)
    return ResultBundle(
        plan=rows, dispatch=dispatch, flows=flows, objective=objective,
        loss_audit=[_row(AUDIT_COLUMNS, **r) for r in audit.rows()] if audit is not None else [],
        reinforcement_log=log.to_dict() if log is not None else {},
    )


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, str):
        return v
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return "%.17g" % float(v)


def _parse(col: str, s: str):
    if s == "":
        return None
    if col in _TEXT:
        return s
    if col in _INT:
        return int(s)
    return float(s)


def _write_csv(path: Path, columns, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r.get(c)) for c in columns])


def _read_csv(path: Path) -> list[dict]:
    with open(path, newline="") as fh:
        return [{k: _parse(k, v) for k, v in r.items()} for r in csv.DictReader(fh)]


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(type(o).__name__)


def write_results(bundle: ResultBundle, out_dir: Path | str) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(out / "plan.csv", PLAN_COLUMNS, bundle.plan)
    _write_csv(out / "dispatch.csv", DISPATCH_COLUMNS, bundle.dispatch)
    _write_csv(out / "flows.csv", FLOW_COLUMNS, bundle.flows)
    _write_csv(out / "loss_audit.csv", AUDIT_COLUMNS, bundle.loss_audit)
    for name, doc in (("objective.json", bundle.objective),
                      ("reinforcement_log.json", bundle.reinforcement_log)):
        (out / name).write_text(json.dumps(doc, indent=1, sort_keys=True,
                                           default=_json_default) + "\n")
    return [out / f for f in RESULT_FILES]


def read_results(out_dir: Path | str) -> ResultBundle:
    d = Path(out_dir)
    return ResultBundle(
        plan=_read_csv(d / "plan.csv"),
        dispatch=_read_csv(d / "dispatch.csv"),
        flows=_read_csv(d / "flows.csv"),
        objective=json.loads((d / "objective.json").read_text()),
        loss_audit=_read_csv(d / "loss_audit.csv"),
        reinforcement_log=json.loads((d / "reinforcement_log.json").read_text()),
    )


def plan_from_bundle(case: NetworkCase, bundle: ResultBundle) -> PlanSolution:
    """Rebuild a :class:`PlanSolution` for ``case`` from its tables."""
    T = len(bundle.objective["delta"])
    S, L, D, N = (len(case.sources), len(case.ac_branches), len(case.dc_branches),
                  len(case.buses))
    pos = {
        "source": {s.id: i for i, s in enumerate(case.sources)},
        "ac": {b.id: j for j, b in enumerate(case.ac_branches)},
        "dc": {d.id: j for j, d in enumerate(case.dc_branches)},
        "bus": case.bus_index(),
    }

    def lookup(element, eid):
        try:
            return pos[element][eid]
        except KeyError:
            raise DanglingReferenceError(f"result row for unknown {element} {eid!r}") from None

    u = {"source": np.zeros(S), "ac": np.zeros(L), "dc": np.zeros(D)}
    circuits = np.ones(L)
    for r in bundle.plan:
        k = lookup(r["element"], r["id"])
        u[r["element"]][k] = r["u"]
        if r["element"] == "ac":
            circuits[k] = r["circuits"]
    z = lambda n: np.zeros((n, T))  # noqa: E731
    a = {k: z(S) for k in ("p", "q", "beta", "beta_su", "beta_sd", "pc", "p_in", "e")}
    v, theta = np.ones((N, T)), z(N)
    for r in bundle.dispatch:
        k = lookup(r["element"], r["id"])
        if r["element"] == "source":
            for name in a:
                a[name][k, r["t"]] = r[name]
        else:
            v[k, r["t"]] = r["v"]
            theta[k, r["t"]] = r["theta"]
    fl = {k: z(L) for k in ("p", "p_rev", "q", "q_rev", "p_loss", "q_dem", "cos")}
    dl = {k: z(D) for k in ("p", "p_rev", "p_fwd", "p_bwd")}
    for r in bundle.flows:
        k = lookup(r["element"], r["id"])
        target = fl if r["element"] == "ac" else dl
        for name in target:
            target[name][k, r["t"]] = r[name]
    obj = bundle.objective
    return PlanSolution(
        kind=obj["kind"], status=obj["status"], objective=obj["objective"],
        source_ids=tuple(s.id for s in case.sources),
        ac_ids=tuple(b.id for b in case.ac_branches),
        dc_ids=tuple(d.id for d in case.dc_branches),
        bus_ids=tuple(b.id for b in case.buses),
        delta=np.asarray(obj["delta"], dtype=float),
        u_s=u["source"], u_ac=u["ac"], u_dc=u["dc"],
        p=a["p"], q=a["q"], beta=a["beta"], beta_su=a["beta_su"], pc=a["pc"],
        p_in=a["p_in"], e=a["e"],
        p_ac=fl["p"], p_ac_rev=fl["p_rev"], q_ac=fl["q"], q_ac_rev=fl["q_rev"],
        p_dc=dl["p"], p_dc_rev=dl["p_rev"], p_dc_fwd=dl["p_fwd"], p_dc_bwd=dl["p_bwd"],
        theta=theta, v=v, p_loss=fl["p_loss"], q_dem=fl["q_dem"], cos=fl["cos"],
        circuits=circuits, iterations=obj.get("iterations", 1),
        converged=obj.get("converged", True), history=obj.get("history", []),
        max_violation=obj.get("max_violation", 0.0),
        beta_sd=a["beta_sd"] if np.any(a["beta_sd"]) else None,
    )
