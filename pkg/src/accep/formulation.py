"""Convex capacity-expansion programs.

Every variant shares the commitment, injection, storage and HVDC blocks and
differs in its flow physics.  Constraint rows are tagged with the name of the
model equation they implement so that the emitted tag set of each variant can
be checked against its definition.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping

import numpy as np
import scipy.sparse as sp

from accep.conic import ConvexProgram
from accep.graph import CycleBasis, build_cycle_basis
from accep.netmodel import BranchParameters, NetworkCase, SnapshotSeries


class FormulationKind(str, Enum):
    DC = "dc"
    DC_LOSSY = "dc-lossy"
    LPAC = "lpac"
    DECOUPLED = "decoupled"

    @property
    def reactive(self) -> bool:
        return self in (FormulationKind.LPAC, FormulationKind.DECOUPLED)

    @property
    def models_losses(self) -> bool:
        return self is not FormulationKind.DC

    @classmethod
    def parse(cls, value: "str | FormulationKind") -> "FormulationKind":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ValueError(f"unknown formulation {value!r}; expected one of "
                             f"{[k.value for k in cls]}") from None


COMMON_TAGS = (
    "online_limit", "online_consistency", "online_boundary", "ps_injections_online",
    "storage_unit_charging", "storage_unit_complementarity_relaxation",
    "state_of_charge_limits", "state_of_charge", "state_of_charge_cyclic",
    "flow_hvdc_along", "flow_hvdc_against", "flow_hvdc_limit",
)
REACTIVE_TAGS = ("qs_injection_online", "pq_upper", "pq_lower")


@dataclass
class VariableCatalog:
    """Index arrays into the program's variable vector.

    Per-snapshot quantities have shape ``(elements, T)``.  Storage arrays are
    indexed by position in ``storage`` (source positions of storage units).
    Arrays of formulations that lack a quantity are empty.
    """

    u_s: np.ndarray
    u_ac: np.ndarray
    u_dc: np.ndarray
    beta: np.ndarray
    beta_su: np.ndarray
    p: np.ndarray
    q: np.ndarray
    storage: np.ndarray
    pc: np.ndarray
    p_in: np.ndarray
    e: np.ndarray
    p_dc_fwd: np.ndarray
    p_dc_bwd: np.ndarray
    p_dc: np.ndarray
    p_dc_rev: np.ndarray
    p_ac: np.ndarray
    p_ac_rev: np.ndarray
    q_ac: np.ndarray
    q_ac_rev: np.ndarray
    theta: np.ndarray
    v: np.ndarray
    p_loss: np.ndarray
    q_dem: np.ndarray
    cos: np.ndarray


@dataclass
class BuildOptions:
    """``circuits`` sets the circuit count behind the AC branch parameters
    (defaults to ``u_min``); ``fixed_ac`` pins the AC expansion."""

    h_tangents: int = 3
    circuits: Mapping[str, float] | None = None
    fixed_ac: Mapping[str, float] | None = None
    tighten_u_max: bool = True
    reference_angle: bool = True


@dataclass
class Formulation:
    kind: FormulationKind
    case: NetworkCase
    series: SnapshotSeries
    program: ConvexProgram
    catalog: VariableCatalog
    params: list[BranchParameters]
    circuits: np.ndarray
    u_ac_max: np.ndarray
    tangent_points: list[np.ndarray] = field(default_factory=list)


_EMPTY = np.zeros((0, 0), dtype=int)


# -- scalar helpers ----------------------------------------------------------

def cosine_cut_coefficient(theta_max: float) -> float:
    """Curvature k of the cosine cut ``cos_hat <= 1 - k * theta**2``."""
    # 1 - cos t = 2 sin^2(t/2) avoids cancellation for small angles
    return 2.0 * math.sin(0.5 * theta_max) ** 2 / theta_max**2


def compare_loss_models(theta_max: float) -> float:
    """Ratio of the lowest LPAC loss to the quadratic loss ``g*theta**2``.

    This is ``2(1 - cos theta_max) / theta_max**2``; it falls below one as
    the angle limit grows.
    """
    if not 0 < theta_max <= math.pi / 6 + 1e-15:
        raise ValueError(f"theta_max must lie in (0, pi/6], got {theta_max}")
    return 2.0 * cosine_cut_coefficient(theta_max)


def tangent_points(a: float, f_max: float, u_max: float, h: int) -> np.ndarray:
    """Flow values at which the loss tangents touch ``r p^2``, sorted ascending."""
    if h < 1:
        raise ValueError("need at least one tangent")
    step = a * f_max * u_max / h
    pos = step * np.arange(1, h + 1)
    return np.concatenate([-pos[::-1], pos])


def tightened_u_max(branch, x: float | None = None) -> float:
    """Upper circuit bound after capping it where the angle limit binds."""
    x = branch.x if x is None else x
    cap = branch.theta_max / (x * branch.a * branch.f_max)
    if branch.u_max >= cap:
        return max(cap, branch.u_min)
    return branch.u_max


# -- assembly helpers --------------------------------------------------------

class _BusRows:
    """Collects per-(bus, snapshot) linear sums for nodal balance rows."""

    def __init__(self, n_bus: int, T: int) -> None:
        self.n_bus, self.T = n_bus, T
        self.r: list[np.ndarray] = []
        self.c: list[np.ndarray] = []
        self.v: list[np.ndarray] = []

    def add(self, buses, idx: np.ndarray, coef) -> None:
        buses = np.asarray(buses, dtype=int)
        if buses.size == 0 or idx.size == 0:
            return
        rows = buses[:, None] * self.T + np.arange(self.T)[None, :]
        coef = np.broadcast_to(np.asarray(coef, dtype=float).reshape(
            (-1, 1) if np.ndim(coef) == 1 else np.shape(coef)), idx.shape)
        keep = idx >= 0
        self.r.append(rows[keep])
        self.c.append(idx[keep])
        self.v.append(coef[keep])

    def matrix(self, nvar: int) -> sp.csr_matrix:
        if not self.r:
            return sp.csr_matrix((self.n_bus * self.T, nvar))
        r, c, v = (np.concatenate(a) for a in (self.r, self.c, self.v))
        return sp.csr_matrix((v, (r, c)), shape=(self.n_bus * self.T, nvar))


def _injections(f: Formulation, reactive: bool) -> tuple[_BusRows, _BusRows | None]:
    """Source injections minus charging, per bus (left side of the balances)."""
    case, cat = f.case, f.catalog
    T = f.series.T
    n = len(case.buses)
    bidx = case.bus_index()
    src_bus = np.array([bidx[s.bus] for s in case.sources], dtype=int)
    rows_p = _BusRows(n, T)
    rows_p.add(src_bus, cat.p, 1.0)
    if cat.storage.size:
        rows_p.add(src_bus[cat.storage], cat.pc, -1.0)
    rows_q = None
    if reactive:
        rows_q = _BusRows(n, T)
        rows_q.add(src_bus, cat.q, 1.0)
    return rows_p, rows_q


def _add_dc_link_terms(f: Formulation, rows: _BusRows) -> None:
    """HVDC end flows leave the bus, so they enter with coefficient -1."""
    case, cat = f.case, f.catalog
    bidx = case.bus_index()
    if not case.dc_branches:
        return
    fb = np.array([bidx[d.from_bus] for d in case.dc_branches])
    tb = np.array([bidx[d.to_bus] for d in case.dc_branches])
    rows.add(fb, cat.p_dc, -1.0)
    rows.add(tb, cat.p_dc_rev, -1.0)


def _loads(f: Formulation, reactive: bool = False) -> np.ndarray:
    get = f.series.q_load if reactive else f.series.p_load
    return np.concatenate([get(b.id) for b in f.case.buses]) if f.case.buses else np.zeros(0)


def _branch_ends(case: NetworkCase) -> tuple[np.ndarray, np.ndarray]:
    bidx = case.bus_index()
    fb = np.array([bidx[br.from_bus] for br in case.ac_branches], dtype=int)
    tb = np.array([bidx[br.to_bus] for br in case.ac_branches], dtype=int)
    return fb, tb


def _col(values, T: int) -> np.ndarray:
    return np.repeat(np.asarray(values, dtype=float)[:, None], T, axis=1)


# -- shared blocks -----------------------------------------------------------

def build_objective(f: Formulation) -> None:
    prog, cat, case, series = f.program, f.catalog, f.case, f.series
    delta = np.asarray(series.delta, dtype=float)
    # sources tied to an HVDC link share its unit count; any capital cost
    # they carry still applies per unit of that count
    prog.add_objective(cat.u_s, [s.c for s in case.sources])
    o = np.array([s.o for s in case.sources])
    osu = np.array([s.o_su for s in case.sources])
    if series.T and case.sources:
        prog.add_objective(cat.p, o[:, None] * delta[None, :])
        prog.add_objective(cat.beta_su, _col(osu, series.T))
    prog.add_objective(cat.u_ac, [br.c for br in case.ac_branches])
    prog.add_objective(cat.u_dc, [d.c for d in case.dc_branches])


def build_commitment_block(f: Formulation) -> None:
    prog, cat = f.program, f.catalog
    S, T = cat.beta.shape
    u = np.repeat(cat.u_s[:, None], T, axis=1) if S else _EMPTY
    prog.add_constraints("online_limit", "<=", [(cat.beta, 1.0), (u, -1.0)])
    if T > 1:
        prog.add_constraints("online_consistency", "<=",
                             [(cat.beta[:, 1:], 1.0), (cat.beta[:, :-1], -1.0),
                              (cat.beta_su[:, 1:], -1.0)])
    else:
        prog.add_constraints("online_consistency", "<=", [(np.zeros(0, dtype=int), 1.0)])
    b1 = cat.beta[:, 0] if S else np.zeros(0, dtype=int)
    bT = cat.beta[:, -1] if S else np.zeros(0, dtype=int)
    su1 = cat.beta_su[:, 0] if S else np.zeros(0, dtype=int)
    prog.add_constraints("online_boundary", "<=", [(b1, 1.0), (bT, -1.0), (su1, -1.0)])


def build_injection_block(f: Formulation) -> None:
    prog, cat, case, series = f.program, f.catalog, f.case, f.series
    T = series.T
    S = len(case.sources)
    pmax = np.array([s.p_max for s in case.sources])
    pmin = np.array([s.p_min for s in case.sources])
    avail = (np.array([series.avail(s) for s in case.sources]) if S
             else np.zeros((0, T)))
    prog.add_constraints("ps_injections_online", "<=",
                         [(cat.p, 1.0), (cat.beta, -avail * pmax[:, None] if S else 0.0)])
    prog.add_constraints("ps_injections_online", "<=",
                         [(cat.p, -1.0), (cat.beta, _col(pmin, T) if S else 0.0)])
    if not f.kind.reactive:
        return
    qmax = np.array([s.q_max for s in case.sources])
    qmin = np.array([s.q_min for s in case.sources])
    prog.add_constraints("qs_injection_online", "<=",
                         [(cat.q, 1.0), (cat.beta, -_col(qmax, T) if S else 0.0)])
    prog.add_constraints("qs_injection_online", "<=",
                         [(cat.q, -1.0), (cat.beta, _col(qmin, T) if S else 0.0)])
    for tag, attr, sign in (("pq_upper", "upper", 1.0), ("pq_lower", "lower", -1.0)):
        sel, taus, upss = [], [], []
        for i, s in enumerate(case.sources):
            for tau, ups in getattr(s.capability, attr):
                sel.append(i)
                taus.append(tau)
                upss.append(ups * s.p_max)
        sel = np.array(sel, dtype=int)
        if sel.size:
            # sign*(p - tau q - ups pmax beta) <= 0
            prog.add_constraints(tag, "<=", [
                (cat.p[sel], sign),
                (cat.q[sel], -sign * _col(taus, T)),
                (cat.beta[sel], -sign * _col(upss, T)),
            ])
        else:
            prog.add_constraints(tag, "<=", [(sel, 1.0)])


def build_storage_block(f: Formulation) -> None:
    prog, cat, case, series = f.program, f.catalog, f.case, f.series
    T = series.T
    sto = cat.storage
    units = [case.sources[i] for i in sto]
    pmax = np.array([s.p_max for s in units])
    emax = np.array([s.e_max for s in units])
    beta = cat.beta[sto] if sto.size else _EMPTY
    p = cat.p[sto] if sto.size else _EMPTY
    prog.add_constraints("storage_unit_charging", "<=",
                         [(cat.pc, 1.0), (beta, -_col(pmax, T) if sto.size else 0.0)])
    prog.add_constraints("storage_unit_complementarity_relaxation", "<=",
                         [(p, 1.0), (cat.pc, 1.0), (beta, -_col(pmax, T) if sto.size else 0.0)])
    u = np.repeat(cat.u_s[sto][:, None], T, axis=1) if sto.size else _EMPTY
    prog.add_constraints("state_of_charge_limits", "<=",
                         [(cat.e, 1.0), (u, -_col(emax, T) if sto.size else 0.0)])

    delta = np.asarray(series.delta, dtype=float)
    eta_c = np.array([s.eta_chg for s in units])
    eta_d = np.array([s.eta_dis for s in units])

    def recursion(cur, prev, tsel):
        if not sto.size:
            return [(np.zeros(0, dtype=int), 1.0)]
        d = delta[tsel][None, :]
        return [(cat.e[:, cur], 1.0), (cat.e[:, prev], -1.0),
                (cat.pc[:, cur], -eta_c[:, None] * d),
                (p[:, cur], d / eta_d[:, None]),
                (cat.p_in[:, cur], -np.broadcast_to(d, (sto.size, len(tsel))))]

    later = np.arange(1, T)
    if later.size:
        prog.add_constraints("state_of_charge", "==", recursion(later, later - 1, later))
    else:
        prog.add_constraints("state_of_charge", "==", [(np.zeros(0, dtype=int), 1.0)])
    # first snapshot follows the last one, closing the energy cycle
    first = np.array([0])
    prog.add_constraints("state_of_charge_cyclic", "==",
                         recursion(first, np.array([T - 1]), first) if T else
                         [(np.zeros(0, dtype=int), 1.0)])


def build_hvdc_block(f: Formulation) -> None:
    prog, cat, case, series = f.program, f.catalog, f.case, f.series
    T = series.T
    D = len(case.dc_branches)
    eta = _col([d.eta for d in case.dc_branches], T) if D else 0.0
    prog.add_constraints("flow_hvdc_along", "==",
                         [(cat.p_dc, 1.0), (cat.p_dc_fwd, -1.0), (cat.p_dc_bwd, 1.0 - eta)])
    prog.add_constraints("flow_hvdc_against", "==",
                         [(cat.p_dc_rev, 1.0), (cat.p_dc_bwd, -1.0), (cat.p_dc_fwd, 1.0 - eta)])
    pmax = _col([d.p_max for d in case.dc_branches], T) if D else 0.0
    u = np.repeat(cat.u_dc[:, None], T, axis=1) if D else _EMPTY
    for flow in (cat.p_dc, cat.p_dc_rev):
        for sign in (1.0, -1.0):
            prog.add_constraints("flow_hvdc_limit", "<=", [(flow, sign), (u, -pmax)])


# -- flow physics ------------------------------------------------------------

def _branch_arrays(f: Formulation) -> dict[str, np.ndarray]:
    T = f.series.T
    brs = f.case.ac_branches
    return {
        "g": _col([p.g for p in f.params], T), "b": _col([p.b for p in f.params], T),
        "b_sh": _col([p.b_sh for p in f.params], T), "r": _col([p.r for p in f.params], T),
        "x": _col([p.x for p in f.params], T),
        "cap": _col([br.a * br.f_max for br in brs], T),
        "theta_max": _col([br.theta_max for br in brs], T),
    }


def _u_ac(f: Formulation) -> np.ndarray:
    T = f.series.T
    return np.repeat(f.catalog.u_ac[:, None], T, axis=1) if f.catalog.u_ac.size else _EMPTY


def _kvl_and_angle_bound(f: Formulation, cycles: CycleBasis, arr) -> None:
    prog, cat = f.program, f.catalog
    T = f.series.T
    L = len(f.case.ac_branches)
    x = np.array([p.x for p in f.params])
    C = cycles.matrix.tocsc()
    # rows: (cycle, t); entries C_lc x_l on p[l, t]
    mat = sp.csr_matrix((len(cycles) * T, prog.nvar))
    if len(cycles) and T:
        coo = sp.coo_matrix(C.T.multiply(x[None, :]))  # cycles x branches
        r = (coo.row[:, None] * T + np.arange(T)[None, :]).ravel()
        c = cat.p_ac[coo.col].ravel()
        v = np.repeat(coo.data, T)
        mat = sp.csr_matrix((v, (r, c)), shape=(len(cycles) * T, prog.nvar))
    prog.add_matrix("kvl", "==", mat, 0.0)
    bound = arr["theta_max"] / arr["x"] if L else 0.0
    prog.add_constraints("voltage_angle_difference_dc_approx", "<=", [(cat.p_ac, 1.0)], bound)
    prog.add_constraints("voltage_angle_difference_dc_approx", "<=", [(cat.p_ac, -1.0)], bound)


def build_dc_flow(f: Formulation, cycles: CycleBasis) -> None:
    prog, cat, case = f.program, f.catalog, f.case
    arr = _branch_arrays(f)
    L = len(case.ac_branches)
    _kvl_and_angle_bound(f, cycles, arr)
    u = _u_ac(f)
    cap = -arr["cap"] if L else 0.0
    prog.add_constraints("thermal_limit_dc", "<=", [(cat.p_ac, 1.0), (u, cap)])
    prog.add_constraints("thermal_limit_dc", "<=", [(cat.p_ac, -1.0), (u, cap)])
    rows, _ = _injections(f, reactive=False)
    fb, tb = _branch_ends(case)
    rows.add(fb, cat.p_ac, -1.0)
    rows.add(tb, cat.p_ac, 1.0)
    _add_dc_link_terms(f, rows)
    prog.add_matrix("nodal_balance_p_dc", "==", rows.matrix(prog.nvar), _loads(f))


def build_dc_lossy_flow(f: Formulation, cycles: CycleBasis, h: int) -> None:
    prog, cat, case = f.program, f.catalog, f.case
    T = f.series.T
    arr = _branch_arrays(f)
    L = len(case.ac_branches)
    if h < 1:
        raise ValueError("the loss relaxation needs at least one tangent")
    f.tangent_points = [tangent_points(br.a, br.f_max, f.u_ac_max[j], h)
                        for j, br in enumerate(case.ac_branches)]
    for k in range(2 * h):
        p0 = _col([pts[k] for pts in f.tangent_points], T) if L else 0.0
        r = arr["r"] if L else 0.0
        # r p0 (2p - p0) <= p_loss   ->   2 r p0 p - p_loss <= r p0^2
        prog.add_constraints("losses_p_dc", "<=",
                             [(cat.p_ac, 2.0 * r * p0), (cat.p_loss, -1.0)], r * p0 * p0)
    _kvl_and_angle_bound(f, cycles, arr)
    u = _u_ac(f)
    cap = -arr["cap"] if L else 0.0
    for sign in (1.0, -1.0):
        prog.add_constraints("thermal_limit_dc_lossy", "<=",
                             [(cat.p_ac, sign), (cat.p_loss, 1.0), (u, cap)])
    rows, _ = _injections(f, reactive=False)
    fb, tb = _branch_ends(case)
    rows.add(fb, cat.p_ac, -1.0)
    rows.add(tb, cat.p_ac, 1.0)
    rows.add(fb, cat.p_loss, -0.5)
    rows.add(tb, cat.p_loss, -0.5)
    _add_dc_link_terms(f, rows)
    prog.add_matrix("nodal_balance_p_dc_lossy", "==", rows.matrix(prog.nvar), _loads(f))


def _angle_limits(f: Formulation, arr) -> None:
    prog, cat = f.program, f.catalog
    fb, tb = _branch_ends(f.case)
    th_f = cat.theta[fb] if fb.size else _EMPTY
    th_t = cat.theta[tb] if fb.size else _EMPTY
    lim = arr["theta_max"] if fb.size else 0.0
    prog.add_constraints("voltage_angle_difference", "<=", [(th_f, 1.0), (th_t, -1.0)], lim)
    prog.add_constraints("voltage_angle_difference", "<=", [(th_f, -1.0), (th_t, 1.0)], lim)


def _flow_rows(f: Formulation, arr, tag_p: str, tag_q: str, with_cos: bool) -> None:
    """Linearised directed flows; LPAC adds the relaxed cosine term."""
    prog, cat = f.program, f.catalog
    fb, tb = _branch_ends(f.case)
    L = fb.size
    g, b, bsh = (arr[k] if L else 0.0 for k in ("g", "b", "b_sh"))
    for flow_p, flow_q, n, m in ((cat.p_ac, cat.q_ac, fb, tb), (cat.p_ac_rev, cat.q_ac_rev, tb, fb)):
        vn = cat.v[n] if L else _EMPTY
        vm = cat.v[m] if L else _EMPTY
        thn = cat.theta[n] if L else _EMPTY
        thm = cat.theta[m] if L else _EMPTY
        # p = g(vn - vm) [+ g(1 - c)] - b(thn - thm)
        terms = [(flow_p, 1.0), (vn, -g), (vm, g), (thn, b), (thm, -b)]
        rhs_p = 0.0
        if with_cos:
            terms.append((cat.cos, g))
            rhs_p = g
        prog.add_constraints(tag_p, "==", terms, rhs_p)
        # q = -(bsh/2)(2vn - 1) - b(vn - vm) [- b(1 - c)] - g(thn - thm)
        terms = [(flow_q, 1.0), (vn, bsh + b), (vm, -b), (thn, g), (thm, -g)]
        rhs_q = bsh / 2.0 if L else 0.0
        if with_cos:
            terms.append((cat.cos, -b))
            rhs_q = rhs_q - b
        prog.add_constraints(tag_q, "==", terms, rhs_q)


def build_lpac_flow(f: Formulation) -> None:
    prog, cat, case = f.program, f.catalog, f.case
    arr = _branch_arrays(f)
    fb, tb = _branch_ends(case)
    L = fb.size
    _flow_rows(f, arr, "lpac_p", "lpac_q", with_cos=True)
    k = np.array([cosine_cut_coefficient(br.theta_max) for br in case.ac_branches])
    th_f = cat.theta[fb] if L else _EMPTY
    th_t = cat.theta[tb] if L else _EMPTY
    sk = 2.0 * np.sqrt(_col(k, f.series.T)) if L else 0.0
    # k theta^2 <= 1 - c   <=>   ||(2 sqrt(k) theta, -c)|| <= 2 - c
    prog.add_soc("cosine_relaxation", [
        ([(cat.cos, -1.0)], 2.0),
        ([(th_f, sk), (th_t, -sk if L else 0.0)], 0.0),
        ([(cat.cos, -1.0)], 0.0),
    ])
    u = _u_ac(f)
    cap = arr["cap"] if L else 0.0
    for fp, fq in ((cat.p_ac, cat.q_ac), (cat.p_ac_rev, cat.q_ac_rev)):
        prog.add_soc("thermal_limit", [([(u, cap)], 0.0), ([(fp, 1.0)], 0.0), ([(fq, 1.0)], 0.0)])
    _angle_limits(f, arr)
    rows_p, rows_q = _injections(f, reactive=True)
    rows_p.add(fb, cat.p_ac, -1.0)
    rows_p.add(tb, cat.p_ac_rev, -1.0)
    _add_dc_link_terms(f, rows_p)
    prog.add_matrix("ac_nodal_balance_p", "==", rows_p.matrix(prog.nvar), _loads(f))
    rows_q.add(fb, cat.q_ac, -1.0)
    rows_q.add(tb, cat.q_ac_rev, -1.0)
    prog.add_matrix("ac_nodal_balance_q", "==", rows_q.matrix(prog.nvar), _loads(f, True))


def build_decoupled_flow(f: Formulation) -> None:
    prog, cat, case = f.program, f.catalog, f.case
    arr = _branch_arrays(f)
    fb, tb = _branch_ends(case)
    L = fb.size
    _flow_rows(f, arr, "decoupled_p", "decoupled_q", with_cos=False)
    th_f = cat.theta[fb] if L else _EMPTY
    th_t = cat.theta[tb] if L else _EMPTY
    g = arr["g"] if L else 0.0
    nb = -arr["b"] if L else 0.0
    tmax2 = arr["theta_max"] ** 2 if L else 0.0
    for tag, var, coef in (("decoupled_p_losses", cat.p_loss, g),
                           ("decoupled_q_losses", cat.q_dem, nb)):
        # coef theta^2 <= w   <=>   ||(2 sqrt(coef) theta, w - 1)|| <= w + 1
        s = 2.0 * np.sqrt(coef) if L else 0.0
        prog.add_soc(tag, [
            ([(var, 1.0)], 1.0),
            ([(th_f, s), (th_t, -s if L else 0.0)], 0.0),
            ([(var, 1.0)], -1.0),
        ])
        prog.add_constraints(tag, "<=", [(var, 1.0)], coef * tmax2 if L else 0.0)
    u = _u_ac(f)
    cap = arr["cap"] if L else 0.0
    for fp, fq in ((cat.p_ac, cat.q_ac), (cat.p_ac_rev, cat.q_ac_rev)):
        prog.add_soc("thermal_limit_decoupled", [
            ([(u, cap)], 0.0),
            ([(fp, 1.0), (cat.p_loss, 1.0)], 0.0),
            ([(fq, 1.0), (cat.q_dem, 1.0)], 0.0),
        ])
    _angle_limits(f, arr)
    rows_p, rows_q = _injections(f, reactive=True)
    rows_p.add(fb, cat.p_ac, -1.0)
    rows_p.add(tb, cat.p_ac, 1.0)
    rows_p.add(fb, cat.p_loss, -0.5)
    rows_p.add(tb, cat.p_loss, -0.5)
    _add_dc_link_terms(f, rows_p)
    prog.add_matrix("ac_nodal_balance_p_decoupled", "==", rows_p.matrix(prog.nvar), _loads(f))
    rows_q.add(fb, cat.q_ac, -1.0)
    rows_q.add(tb, cat.q_ac_rev, -1.0)
    rows_q.add(fb, cat.q_dem, -0.5)
    rows_q.add(tb, cat.q_dem, -0.5)
    prog.add_matrix("ac_nodal_balance_q_decoupled", "==", rows_q.matrix(prog.nvar),
                    _loads(f, True))


# -- program assembly --------------------------------------------------------

def _circuits(case: NetworkCase, circuits: Mapping[str, float] | None) -> np.ndarray:
    if circuits is None:
        return np.array([br.u_min for br in case.ac_branches], dtype=float)
    return np.array([circuits[br.id] for br in case.ac_branches], dtype=float)


def _reference_buses(case: NetworkCase) -> list[int]:
    return [comp[0] for comp in case.islands()]


def build_program(case: NetworkCase, series: SnapshotSeries, kind,
                  options: BuildOptions | None = None) -> Formulation:
    """Assemble the convex program of ``kind`` for ``case`` over ``series``."""
    kind = FormulationKind.parse(kind)
    opt = options or BuildOptions()
    T = series.T
    S, L, D, N = (len(case.sources), len(case.ac_branches), len(case.dc_branches),
                  len(case.buses))
    circuits = _circuits(case, opt.circuits)
    params = [br.parameters(m) for br, m in zip(case.ac_branches, circuits)]

    u_max = np.array([br.u_max for br in case.ac_branches], dtype=float)
    u_min = np.array([br.u_min for br in case.ac_branches], dtype=float)
    if opt.tighten_u_max and kind in (FormulationKind.DC, FormulationKind.DC_LOSSY):
        u_max = np.array([tightened_u_max(br) for br in case.ac_branches], dtype=float)
    # the loss tangent grid follows the expansion bound, not a fixed value
    u_grid = u_max.copy()
    if opt.fixed_ac is not None:
        u_min = u_max = np.array([opt.fixed_ac[br.id] for br in case.ac_branches], dtype=float)

    prog = ConvexProgram()
    e2 = np.zeros((0, T), dtype=int)
    u_ac = prog.add_var("u_ac", L, u_min, u_max)
    u_dc = prog.add_var("u_dc", D, [d.u_min for d in case.dc_branches],
                        [d.u_max for d in case.dc_branches])
    dc_pos = {d.id: j for j, d in enumerate(case.dc_branches)}
    own = [i for i, s in enumerate(case.sources) if s.linked_branch is None]
    u_own = prog.add_var("u_s", len(own), [case.sources[i].u_min for i in own],
                         [case.sources[i].u_max for i in own])
    u_s = np.empty(S, dtype=int)
    u_s[own] = u_own
    for i, s in enumerate(case.sources):
        if s.linked_branch is not None:
            u_s[i] = u_dc[dc_pos[s.linked_branch]]

    beta = prog.add_var("beta", (S, T), 0.0)
    beta_su = prog.add_var("beta_su", (S, T), 0.0)
    p = prog.add_var("p", (S, T), -np.inf)
    q = prog.add_var("q", (S, T), -np.inf) if kind.reactive else e2
    storage = np.array([i for i, s in enumerate(case.sources) if s.is_storage], dtype=int)
    K = storage.size
    pc = prog.add_var("p_charge", (K, T), 0.0)
    inflow = (np.array([series.inflow_max(case.sources[i]) for i in storage])
              if K else np.zeros((0, T)))
    p_in = prog.add_var("p_inflow", (K, T), 0.0, inflow)
    e = prog.add_var("energy", (K, T), 0.0)

    p_dc_fwd = prog.add_var("p_dc_fwd", (D, T), 0.0)
    p_dc_bwd = prog.add_var("p_dc_bwd", (D, T), 0.0)
    p_dc = prog.add_var("p_dc", (D, T), -np.inf)
    p_dc_rev = prog.add_var("p_dc_rev", (D, T), -np.inf)

    p_ac = prog.add_var("p_ac", (L, T), -np.inf)
    p_ac_rev = q_ac = q_ac_rev = theta = v = p_loss = q_dem = cos = e2
    if kind.reactive:
        p_ac_rev = prog.add_var("p_ac_rev", (L, T), -np.inf)
        q_ac = prog.add_var("q_ac", (L, T), -np.inf)
        q_ac_rev = prog.add_var("q_ac_rev", (L, T), -np.inf)
        th_lb = np.full((N, T), -math.pi / 2)
        th_ub = np.full((N, T), math.pi / 2)
        if opt.reference_angle:
            for ref in _reference_buses(case):
                th_lb[ref] = th_ub[ref] = 0.0
        theta = prog.add_var("theta", (N, T), th_lb, th_ub)
        v = prog.add_var("v", (N, T), 0.9, 1.1)
    if kind in (FormulationKind.DC_LOSSY, FormulationKind.DECOUPLED):
        p_loss = prog.add_var("p_loss", (L, T), 0.0)
    if kind is FormulationKind.DECOUPLED:
        q_dem = prog.add_var("q_dem", (L, T), 0.0)
    if kind is FormulationKind.LPAC:
        cmin = np.array([math.cos(br.theta_max) for br in case.ac_branches])
        cos = prog.add_var("cos_hat", (L, T), _col(cmin, T) if L else 0.0, 1.0)

    cat = VariableCatalog(u_s=u_s, u_ac=u_ac, u_dc=u_dc, beta=beta, beta_su=beta_su, p=p, q=q,
                          storage=storage, pc=pc, p_in=p_in, e=e, p_dc_fwd=p_dc_fwd,
                          p_dc_bwd=p_dc_bwd, p_dc=p_dc, p_dc_rev=p_dc_rev, p_ac=p_ac,
                          p_ac_rev=p_ac_rev, q_ac=q_ac, q_ac_rev=q_ac_rev, theta=theta, v=v,
                          p_loss=p_loss, q_dem=q_dem, cos=cos)
    f = Formulation(kind, case, series, prog, cat, params, circuits, u_grid)

    build_objective(f)
    build_commitment_block(f)
    build_injection_block(f)
    build_storage_block(f)
    build_hvdc_block(f)
    if kind is FormulationKind.DC:
        build_dc_flow(f, build_cycle_basis(case))
    elif kind is FormulationKind.DC_LOSSY:
        build_dc_lossy_flow(f, build_cycle_basis(case), opt.h_tangents)
    elif kind is FormulationKind.LPAC:
        build_lpac_flow(f)
    else:
        build_decoupled_flow(f)
    return f


def emitted_tags(f: Formulation) -> frozenset[str]:
    return frozenset(f.program.tags)
