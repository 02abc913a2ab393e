"""Network, source, storage and snapshot data model.

All electrical quantities are per-unit on a single case-wide MVA base.
Objects are frozen once built; helpers that modify a case return a copy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping

import networkx as nx
import numpy as np

SOURCE_KINDS = ("SG", "IBR", "storage", "compensator")
CONVERTER_KINDS = ("lcc", "vsc")

# reactive share of a VSC terminal relative to the link rating (rectangle curve)
VSC_Q_FRACTION = 0.4


@dataclass(frozen=True)
class Bus:
    id: str
    v_nom: str = ""
    island: str = "main"


@dataclass(frozen=True)
class AcBranch:
    """Pi-equivalent HVAC line; electrical values are per circuit."""

    id: str
    from_bus: str
    to_bus: str
    r: float
    x: float
    b_sh: float = 0.0
    f_max: float = 1.0
    a: float = 1.0
    theta_max: float = math.pi / 6
    u_min: float = 1.0
    u_max: float = 1.0
    c: float = 0.0
    length_km: float = 0.0

    @property
    def g(self) -> float:
        return self.r / (self.r**2 + self.x**2)

    @property
    def b(self) -> float:
        return -self.x / (self.r**2 + self.x**2)

    def parameters(self, circuits: float) -> "BranchParameters":
        """Electrical parameters of ``circuits`` parallel circuits.

        A zero (or negative) count falls back to one circuit so that the
        flow physics stays defined; capacity is handled by ``u`` elsewhere.
        """
        m = circuits if circuits > 0 else 1.0
        return BranchParameters(
            g=self.g * m, b=self.b * m, b_sh=self.b_sh * m, r=self.r / m, x=self.x / m
        )


@dataclass(frozen=True)
class BranchParameters:
    g: float
    b: float
    b_sh: float
    r: float
    x: float


@dataclass(frozen=True)
class DcBranch:
    id: str
    from_bus: str
    to_bus: str
    p_max: float
    length_km: float = 0.0
    eta: float = 0.0
    converter: str = "lcc"
    u_min: float = 1.0
    u_max: float = 1.0
    c: float = 0.0


@dataclass(frozen=True)
class CapabilityCurve:
    """Convex PQ polytope: ``p <= tau*q + ups*p_max*beta`` for each upper
    line and ``p >= tau*q + ups*p_max*beta`` for each lower line.

    ``q_min_frac``/``q_max_frac`` are the reactive limits of the preset as
    a fraction of ``p_max``.
    """

    upper: tuple[tuple[float, float], ...] = ()
    lower: tuple[tuple[float, float], ...] = ()
    preset: str = "custom"
    q_min_frac: float = -0.4
    q_max_frac: float = 0.4

    @classmethod
    def d_curve(cls) -> "CapabilityCurve":
        return cls(upper=((0.5, 1.0), (-1.0 / 3.0, 1.0)), preset="d-curve",
                   q_min_frac=-0.4, q_max_frac=0.6)

    @classmethod
    def u_shape(cls) -> "CapabilityCurve":
        return cls(lower=((0.5, 0.0), (-0.5, 0.0)), preset="u-shape",
                   q_min_frac=-0.4, q_max_frac=0.4)

    @classmethod
    def triangle(cls, cos_phi: float = 0.95) -> "CapabilityCurve":
        tan_phi = math.tan(math.acos(cos_phi))
        return cls(lower=((1.0 / tan_phi, 0.0), (-1.0 / tan_phi, 0.0)), preset="triangle",
                   q_min_frac=-tan_phi, q_max_frac=tan_phi)

    @classmethod
    def rectangle(cls) -> "CapabilityCurve":
        return cls(preset="rectangle", q_min_frac=-0.4, q_max_frac=0.4)

    @classmethod
    def from_preset(cls, name: str, cos_phi: float = 0.95) -> "CapabilityCurve":
        builders = {
            "d-curve": cls.d_curve,
            "u-shape": cls.u_shape,
            "rectangle": cls.rectangle,
        }
        if name == "triangle":
            return cls.triangle(cos_phi)
        try:
            return builders[name]()
        except KeyError:
            raise ValueError(f"unknown capability preset {name!r}") from None

    def vertices(self, p_max: float = 1.0, p_min: float = 0.0) -> np.ndarray:
        """Vertices of the polytope for one online unit (brute-force enumeration)."""
        # every constraint as  alpha*p + gamma*q <= rhs
        rows = [(1.0, 0.0, p_max), (-1.0, 0.0, -p_min),
                (0.0, 1.0, self.q_max_frac * p_max), (0.0, -1.0, -self.q_min_frac * p_max)]
        rows += [(1.0, -tau, ups * p_max) for tau, ups in self.upper]
        rows += [(-1.0, tau, -ups * p_max) for tau, ups in self.lower]
        pts = []
        for i in range(len(rows)):
            for j in range(i + 1, len(rows)):
                m = np.array([rows[i][:2], rows[j][:2]])
                if abs(np.linalg.det(m)) < 1e-12:
                    continue
                pt = np.linalg.solve(m, [rows[i][2], rows[j][2]])
                if all(al * pt[0] + ga * pt[1] <= rhs + 1e-9 for al, ga, rhs in rows):
                    pts.append(pt)
        if not pts:
            return np.zeros((0, 2))
        return np.unique(np.round(np.array(pts), 12), axis=0)


@dataclass(frozen=True)
class PowerSource:
    """Generator, inverter-based resource, storage unit or compensator.

    Power limits are per unit of installed capacity; ``q_min``/``q_max``
    are absolute per-unit values per unit (already scaled by ``p_max`` for
    presets).  ``linked_branch`` ties the unit count to a DC branch, which
    is how VSC terminals get their reactive capability.
    """

    id: str
    bus: str
    kind: str
    carrier: str = ""
    p_min: float = 0.0
    p_max: float = 0.0
    q_min: float = 0.0
    q_max: float = 0.0
    capability: CapabilityCurve = field(default_factory=CapabilityCurve.rectangle)
    u_min: float = 0.0
    u_max: float = 0.0
    c: float = 0.0
    o: float = 0.0
    o_su: float = 0.0
    availability: str | None = None
    e_max: float = 0.0
    eta_dis: float = 1.0
    eta_chg: float = 1.0
    inflow: str | None = None
    linked_branch: str | None = None

    @property
    def is_storage(self) -> bool:
        return self.kind == "storage"


@dataclass(frozen=True)
class NetworkCase:
    name: str
    buses: tuple[Bus, ...]
    ac_branches: tuple[AcBranch, ...] = ()
    dc_branches: tuple[DcBranch, ...] = ()
    sources: tuple[PowerSource, ...] = ()
    base_mva: float = 100.0

    def bus_index(self) -> dict[str, int]:
        return {b.id: i for i, b in enumerate(self.buses)}

    def source(self, sid: str) -> PowerSource:
        for s in self.sources:
            if s.id == sid:
                return s
        raise KeyError(sid)

    def ac_branch(self, lid: str) -> AcBranch:
        for br in self.ac_branches:
            if br.id == lid:
                return br
        raise KeyError(lid)

    def islands(self) -> list[list[int]]:
        """Bus index groups of the AC network, each sorted, ordered by lowest index."""
        g = nx.Graph()
        idx = self.bus_index()
        g.add_nodes_from(range(len(self.buses)))
        g.add_edges_from((idx[br.from_bus], idx[br.to_bus]) for br in self.ac_branches)
        return sorted((sorted(c) for c in nx.connected_components(g)), key=lambda c: c[0])


@dataclass(frozen=True, eq=False)
class SnapshotSeries:
    """Ordered snapshots with durations, per-bus loads and per-profile factors."""

    delta: np.ndarray
    load_p: Mapping[str, np.ndarray] = field(default_factory=dict)
    load_q: Mapping[str, np.ndarray] = field(default_factory=dict)
    availability: Mapping[str, np.ndarray] = field(default_factory=dict)
    inflow: Mapping[str, np.ndarray] = field(default_factory=dict)

    @property
    def T(self) -> int:
        return len(self.delta)

    def p_load(self, bus: str) -> np.ndarray:
        return np.asarray(self.load_p.get(bus, np.zeros(self.T)), dtype=float)

    def q_load(self, bus: str) -> np.ndarray:
        return np.asarray(self.load_q.get(bus, np.zeros(self.T)), dtype=float)

    def avail(self, source: PowerSource) -> np.ndarray:
        if source.availability is None:
            return np.ones(self.T)
        return np.asarray(self.availability[source.availability], dtype=float)

    def inflow_max(self, source: PowerSource) -> np.ndarray:
        if source.inflow is None:
            return np.zeros(self.T)
        return np.asarray(self.inflow[source.inflow], dtype=float)

    def subset(self, snapshots: Iterable[int]) -> "SnapshotSeries":
        ts = list(snapshots)
        pick = lambda d: {k: np.asarray(v)[ts] for k, v in d.items()}  # noqa: E731
        return SnapshotSeries(np.asarray(self.delta)[ts], pick(self.load_p), pick(self.load_q),
                              pick(self.availability), pick(self.inflow))

    def scaled_loads(self, factor: float) -> "SnapshotSeries":
        mul = lambda d: {k: np.asarray(v) * factor for k, v in d.items()}  # noqa: E731
        return replace(self, load_p=mul(self.load_p), load_q=mul(self.load_q))


@dataclass(frozen=True)
class Violation:
    element: str
    field: str
    message: str

    def __str__(self) -> str:
        return f"{self.element}.{self.field}: {self.message}"


def _check(out: list[Violation], ok: bool, element: str, fld: str, msg: str) -> None:
    if not ok:
        out.append(Violation(element, fld, msg))


def validate_case(case: NetworkCase, series: SnapshotSeries | None = None) -> list[Violation]:
    """Return every structural violation of ``case`` (and ``series``); never raises."""
    out: list[Violation] = []
    bus_ids = [b.id for b in case.buses]
    seen: set[str] = set()
    for bid in bus_ids:
        _check(out, bid not in seen, f"bus:{bid}", "id", "duplicate bus id")
        seen.add(bid)
    known = set(bus_ids)

    ids: set[str] = set()
    for br in case.ac_branches:
        el = f"ac_branch:{br.id}"
        _check(out, br.id not in ids, el, "id", "duplicate branch id")
        ids.add(br.id)
        _check(out, br.from_bus in known, el, "from_bus", f"unknown bus {br.from_bus!r}")
        _check(out, br.to_bus in known, el, "to_bus", f"unknown bus {br.to_bus!r}")
        _check(out, br.from_bus != br.to_bus, el, "to_bus", "branch connects a bus to itself")
        _check(out, br.x > 0, el, "x", f"reactance must be positive, got {br.x}")
        _check(out, br.r >= 0, el, "r", f"resistance must be nonnegative, got {br.r}")
        _check(out, br.b_sh >= 0, el, "b_sh", "shunt susceptance must be nonnegative")
        _check(out, br.f_max > 0, el, "f_max", "thermal rating must be positive")
        _check(out, 0 < br.a <= 1, el, "a", "loading limit must lie in (0, 1]")
        _check(out, 0 < br.theta_max <= math.pi / 2, el, "theta_max",
               "angle limit must lie in (0, pi/2]")
        _check(out, 0 <= br.u_min <= br.u_max, el, "u_min", "need 0 <= u_min <= u_max")
        _check(out, br.c >= 0, el, "c", "capital cost must be nonnegative")
        if br.x > 0 and br.r >= 0:
            _check(out, br.g >= 0 and br.b <= 0, el, "x", "admittance signs violate g>=0, b<=0")

    for dc in case.dc_branches:
        el = f"dc_branch:{dc.id}"
        _check(out, dc.id not in ids, el, "id", "duplicate branch id")
        ids.add(dc.id)
        _check(out, dc.from_bus in known, el, "from_bus", f"unknown bus {dc.from_bus!r}")
        _check(out, dc.to_bus in known, el, "to_bus", f"unknown bus {dc.to_bus!r}")
        _check(out, 0 <= dc.eta < 1, el, "eta", "loss fraction must lie in [0, 1)")
        _check(out, dc.p_max > 0, el, "p_max", "rating must be positive")
        _check(out, 0 <= dc.u_min <= dc.u_max, el, "u_min", "need 0 <= u_min <= u_max")
        _check(out, dc.converter in CONVERTER_KINDS, el, "converter",
               f"converter must be one of {CONVERTER_KINDS}")
        _check(out, dc.c >= 0, el, "c", "capital cost must be nonnegative")

    sids: set[str] = set()
    dc_ids = {dc.id for dc in case.dc_branches}
    for s in case.sources:
        el = f"source:{s.id}"
        _check(out, s.id not in sids, el, "id", "duplicate source id")
        sids.add(s.id)
        _check(out, s.bus in known, el, "bus", f"unknown bus {s.bus!r}")
        _check(out, s.kind in SOURCE_KINDS, el, "kind", f"kind must be one of {SOURCE_KINDS}")
        _check(out, s.p_min <= s.p_max, el, "p_min", "need p_min <= p_max")
        _check(out, s.q_min <= s.q_max, el, "q_min", "need q_min <= q_max")
        _check(out, 0 <= s.u_min <= s.u_max, el, "u_min", "need 0 <= u_min <= u_max")
        _check(out, min(s.c, s.o, s.o_su) >= 0, el, "c", "costs must be nonnegative")
        if s.is_storage:
            _check(out, 0 < s.eta_dis <= 1, el, "eta_dis", "efficiency must lie in (0, 1]")
            _check(out, 0 < s.eta_chg <= 1, el, "eta_chg", "efficiency must lie in (0, 1]")
            _check(out, s.e_max >= 0, el, "e_max", "energy capacity must be nonnegative")
        if s.linked_branch is not None:
            _check(out, s.linked_branch in dc_ids, el, "linked_branch",
                   f"unknown DC branch {s.linked_branch!r}")
        if s.p_max > 0 and not _polytope_nonempty(s):
            out.append(Violation(el, "capability", "PQ polytope is empty for one unit"))
        if series is not None:
            if s.availability is not None:
                _check(out, s.availability in series.availability, el, "availability",
                       f"unknown profile {s.availability!r}")
            if s.inflow is not None:
                _check(out, s.inflow in series.inflow, el, "inflow",
                       f"unknown profile {s.inflow!r}")

    if all(v.field not in ("from_bus", "to_bus") for v in out):
        out.extend(_connectivity(case))
    if series is not None:
        out.extend(_validate_series(case, series))
    return out


def _polytope_nonempty(s: PowerSource) -> bool:
    curve = replace(s.capability, q_min_frac=s.q_min / s.p_max, q_max_frac=s.q_max / s.p_max)
    return len(curve.vertices(1.0, s.p_min / s.p_max)) > 0


def _connectivity(case: NetworkCase) -> list[Violation]:
    out = []
    idx = case.bus_index()
    by_label: dict[str, set[int]] = {}
    for i, b in enumerate(case.buses):
        by_label.setdefault(b.island, set()).add(i)
    for comp in case.islands():
        labels = {case.buses[i].island for i in comp}
        if len(labels) > 1:
            out.append(Violation(f"island:{'/'.join(sorted(labels))}", "buses",
                                 "AC branches join buses of different islands"))
    for label, members in by_label.items():
        comps = [c for c in case.islands() if set(c) & members]
        if len(comps) > 1:
            out.append(Violation(f"island:{label}", "buses",
                                 f"island is split into {len(comps)} AC components"))
    # HVDC may join islands, but the whole system must hang together
    g = nx.Graph()
    g.add_nodes_from(range(len(case.buses)))
    g.add_edges_from((idx[br.from_bus], idx[br.to_bus]) for br in case.ac_branches)
    g.add_edges_from((idx[dc.from_bus], idx[dc.to_bus]) for dc in case.dc_branches)
    if len(case.buses) and not nx.is_connected(g):
        out.append(Violation("network", "buses", "network is not connected through AC/DC branches"))
    return out


def _validate_series(case: NetworkCase, series: SnapshotSeries) -> list[Violation]:
    out = []
    T = series.T
    _check(out, bool(np.all(np.asarray(series.delta) > 0)), "snapshots", "delta",
           "durations must be positive")
    known = {b.id for b in case.buses}
    for name, table in (("load_p", series.load_p), ("load_q", series.load_q)):
        for bus, arr in table.items():
            _check(out, bus in known, "snapshots", name, f"unknown bus {bus!r}")
            _check(out, len(arr) == T, "snapshots", name, f"series for {bus!r} has length "
                   f"{len(arr)}, expected {T}")
    for key, arr in series.availability.items():
        _check(out, len(arr) == T, "snapshots", "availability",
               f"profile {key!r} has length {len(arr)}, expected {T}")
        a = np.asarray(arr)
        _check(out, bool(np.all((a >= 0) & (a <= 1))), "snapshots", "availability",
               f"profile {key!r} leaves [0, 1]")
    for key, arr in series.inflow.items():
        _check(out, len(arr) == T, "snapshots", "inflow",
               f"profile {key!r} has length {len(arr)}, expected {T}")
    return out


def derive_reactive_loads(d_p, cos_phi: float = 0.99):
    """Reactive load for a fixed inductive power factor (positive = consumed)."""
    if not 0 < cos_phi <= 1:
        raise ValueError(f"power factor must lie in (0, 1], got {cos_phi}")
    return np.asarray(d_p, dtype=float) * math.tan(math.acos(cos_phi))


def attach_vsc_compensators(case: NetworkCase) -> NetworkCase:
    """Add a reactive-only source at both terminals of every VSC link.

    The terminals share the link's unit count, so their reactive range is
    ``±0.4 * p_max * u_l``.  Idempotent.
    """
    existing = {s.id for s in case.sources}
    added = []
    for dc in case.dc_branches:
        if dc.converter != "vsc":
            continue
        for end, bus in (("from", dc.from_bus), ("to", dc.to_bus)):
            sid = f"{dc.id}:vsc_{end}"
            if sid in existing:
                continue
            added.append(PowerSource(
                id=sid, bus=bus, kind="compensator", carrier="vsc",
                q_min=-VSC_Q_FRACTION * dc.p_max, q_max=VSC_Q_FRACTION * dc.p_max,
                capability=CapabilityCurve.rectangle(),
                u_min=dc.u_min, u_max=dc.u_max, linked_branch=dc.id,
            ))
    if not added:
        return case
    return replace(case, sources=case.sources + tuple(added))


def hvdc_loss_factor(length_km: float, per_1000km: float = 0.03) -> float:
    return per_1000km * length_km / 1000.0
