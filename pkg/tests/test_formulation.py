import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from accep.conic import check_solution, solve
from accep.formulation import (
    BuildOptions,
    FormulationKind,
    build_program,
    compare_loss_models,
    cosine_cut_coefficient,
    tangent_points,
    tightened_u_max,
)
from accep.netmodel import (
    AcBranch,
    Bus,
    CapabilityCurve,
    DcBranch,
    NetworkCase,
    PowerSource,
    SnapshotSeries,
)
from accep.plan import cost_breakdown, extract_plan

from conftest import case_of


def _one_bus(*sources, T=1, delta=None, load=0.0, **series_kw):
    case = NetworkCase("bus", (Bus("a"),), (), (), tuple(sources))
    d = np.ones(T) if delta is None else np.asarray(delta, float)
    return case, SnapshotSeries(d, {"a": np.full(T, load)}, **series_kw)


def _x(form, **values):
    """A point with the named catalog variables set (everything else zero)."""
    x = np.zeros(form.program.nvar)
    for name, val in values.items():
        idx = getattr(form.catalog, name)
        x[idx] = val
    return x


def _broken(form, x, tol=1e-9):
    rep = check_solution(form.program, x, tol)
    return {label for cls, label, _, _ in rep.violations if cls != "bounds"}


def _le_rhs(prog, tag):
    rhs = prog.le.rhs_vector()
    return np.concatenate([rhs[a:b] for t, a, b in prog.le.tags if t == tag])


# -- objective ---------------------------------------------------------------

def test_zero_costs_give_zero_objective():
    case, series = case_of("case5")
    free = dataclasses.replace(
        case,
        sources=tuple(dataclasses.replace(s, c=0.0, o=0.0, o_su=0.0) for s in case.sources),
        ac_branches=tuple(dataclasses.replace(b, c=0.0) for b in case.ac_branches))
    prog = build_program(free, series, "lpac").program
    x = np.random.default_rng(0).normal(size=prog.nvar)
    assert prog.objective_value(x) == 0.0


def test_capital_cost_only():
    case, series = _one_bus(PowerSource("g", "a", "SG", p_max=1.0, u_max=5.0, c=10.0, o=3.0))
    form = build_program(case, series, "dc")
    assert form.program.objective_value(_x(form, u_s=2.0)) == pytest.approx(20.0)


@pytest.mark.parametrize("kind", ["dc", "decoupled"])
def test_case5_objective_recomputed_from_tables(kind):
    case, series = case_of("case5")
    form = build_program(case, series, kind)
    sol = solve(form.program)
    assert sol.optimal
    plan = extract_plan(form, sol)
    assert cost_breakdown(case, plan)["total"] == pytest.approx(sol.objective, rel=1e-8)


# -- commitment --------------------------------------------------------------

def _sg(**kw):
    base = dict(p_max=1.0, q_min=-0.4, q_max=0.6, capability=CapabilityCurve.d_curve(),
                u_max=5.0, o_su=1.0)
    base.update(kw)
    return PowerSource("g", "a", "SG", **base)


def test_single_snapshot_commitment_rows():
    case, series = _one_bus(_sg(), _sg().__class__("h", "a", "IBR", p_max=1.0, u_max=1.0))
    counts = build_program(case, series, "dc").program.tag_multiset()
    assert counts["online_consistency"] == 0
    assert counts["online_boundary"] == 2
    assert counts["online_limit"] == 2


def test_online_jump_needs_startups():
    case, series = _one_bus(_sg(), T=2)
    form = build_program(case, series, "dc")
    assert "online_consistency" in _broken(form, _x(form, u_s=3.0, beta=[[0.0, 3.0]]))
    assert "online_consistency" not in _broken(
        form, _x(form, u_s=3.0, beta=[[0.0, 3.0]], beta_su=[[0.0, 3.0]]))


def test_constant_commitment_needs_no_startups():
    case, series = _one_bus(_sg(), T=3)
    form = build_program(case, series, "dc")
    broken = _broken(form, _x(form, u_s=2.0, beta=[[2.0, 2.0, 2.0]]))
    assert not broken & {"online_limit", "online_consistency", "online_boundary"}


def test_startup_cost_drives_minimum_startups():
    case, series = _one_bus(_sg(), T=2)
    form = build_program(case, series, "dc")
    prog = form.program
    prog.set_bounds(form.catalog.beta[0], lb=[0.0, 3.0], ub=[0.0, 3.0])
    prog.set_bounds(form.catalog.u_s, lb=3.0, ub=3.0)
    sol = solve(prog, tol=1e-9)
    assert sol.optimal
    assert sol.value(form.catalog.beta_su).sum() == pytest.approx(3.0, abs=1e-6)


# -- injections --------------------------------------------------------------

def test_unavailable_source_cannot_inject():
    w = PowerSource("w", "a", "IBR", p_max=1.0, u_max=1.0, availability="wind")
    case, series = _one_bus(w, availability={"wind": np.array([0.0])})
    form = build_program(case, series, "dc")
    assert "ps_injections_online" in _broken(form, _x(form, u_s=1.0, beta=1.0, p=0.1))
    assert "ps_injections_online" not in _broken(form, _x(form, u_s=1.0, beta=1.0, p=0.0))


def test_d_curve_caps_active_power_at_full_reactive_output():
    case, series = _one_bus(_sg())
    form = build_program(case, series, "lpac")
    at = dict(u_s=1.0, beta=1.0, q=0.6, v=1.0)
    assert "pq_upper" not in _broken(form, _x(form, p=0.8, **at))
    assert "pq_upper" in _broken(form, _x(form, p=0.81, **at))


def test_triangle_bounds_reactive_share():
    tri = CapabilityCurve.triangle(0.95)
    tan_phi = math.tan(math.acos(0.95))
    assert tan_phi == pytest.approx(0.3287, abs=1e-4)
    src = PowerSource("pv", "a", "IBR", p_max=1.0, q_min=-1.0, q_max=1.0, capability=tri,
                      u_max=1.0)
    case, series = _one_bus(src)
    form = build_program(case, series, "decoupled")
    for q in (tan_phi - 1e-6, -(tan_phi - 1e-6)):
        assert "pq_lower" not in _broken(form, _x(form, u_s=1.0, beta=1.0, p=1.0, q=q, v=1.0))
    for q in (tan_phi + 1e-3, -(tan_phi + 1e-3)):
        assert "pq_lower" in _broken(form, _x(form, u_s=1.0, beta=1.0, p=1.0, q=q, v=1.0))


def test_reactive_rows_absent_in_dc_family():
    case, series = _one_bus(_sg())
    for kind in ("dc", "dc-lossy"):
        form = build_program(case, series, kind)
        assert form.catalog.q.size == 0
        assert not {"qs_injection_online", "pq_upper", "pq_lower"} & set(form.program.tags)


# -- storage -----------------------------------------------------------------

def _battery(**kw):
    base = dict(p_max=1.0, u_max=2.0, e_max=4.0, eta_dis=1.0, eta_chg=1.0)
    base.update(kw)
    return PowerSource("bat", "a", "storage", **base)


def test_lossless_charging_adds_exact_energy():
    case, series = _one_bus(_battery(), T=2)
    form = build_program(case, series, "dc")
    pt = dict(u_s=1.0, beta=1.0, pc=[[1.0, 0.0]], p=[[0.0, 1.0]])
    assert not {"state_of_charge", "state_of_charge_cyclic"} & _broken(
        form, _x(form, e=[[1.0, 0.0]], **pt))
    assert "state_of_charge_cyclic" in _broken(form, _x(form, e=[[1.1, 0.0]], **pt))


def test_zero_energy_capacity_forces_empty_store():
    case, series = _one_bus(_battery(e_max=0.0), T=2)
    form = build_program(case, series, "dc")
    assert "state_of_charge_limits" in _broken(form, _x(form, u_s=1.0, e=0.1))


def test_cyclic_storage_balances_over_the_horizon():
    case, series = case_of("case5")
    form = build_program(case, series, "dc")
    sol = solve(form.program)
    plan = extract_plan(form, sol)
    d = np.asarray(series.delta)
    for i, s in enumerate(case.sources):
        if s.is_storage:
            net = (s.eta_chg * plan.pc[i] - plan.p[i] / s.eta_dis + plan.p_in[i]) * d
            assert abs(net.sum()) <= 1e-6


# -- HVDC --------------------------------------------------------------------

def _link(eta):
    buses = (Bus("a", island="x"), Bus("b", island="y"))
    case = NetworkCase("link", buses, (), (DcBranch("d", "a", "b", p_max=2.0, eta=eta),))
    return case, SnapshotSeries(np.ones(1))


def test_hvdc_receiving_end_loses_eta():
    case, series = _link(0.03)
    form = build_program(case, series, "dc")
    x = _x(form, u_dc=1.0, p_dc_fwd=1.0, p_dc=1.0, p_dc_rev=-0.97)
    assert not {"flow_hvdc_along", "flow_hvdc_against"} & _broken(form, x)


def test_lossless_hvdc_is_antisymmetric():
    case, series = _link(0.0)
    form = build_program(case, series, "dc")
    x = _x(form, u_dc=1.0, p_dc_fwd=0.7, p_dc_bwd=0.2, p_dc=0.5, p_dc_rev=-0.5)
    assert not _broken(form, x) & {"flow_hvdc_along", "flow_hvdc_against"}


def test_hvdc_circulation_is_pure_loss():
    case, series = _link(0.03)
    form = build_program(case, series, "dc")
    x = _x(form, u_dc=1.0, p_dc_fwd=1.0, p_dc_bwd=1.0, p_dc=0.03, p_dc_rev=0.03)
    assert not _broken(form, x) & {"flow_hvdc_along", "flow_hvdc_against"}


# -- DC flow -----------------------------------------------------------------

def _pair(**kw):
    br = AcBranch("l", "a", "b", **{"r": 0.0, "x": 0.1, **kw})
    return NetworkCase("pair", (Bus("a"), Bus("b")), (br,), ()), SnapshotSeries(np.ones(1))


def test_angle_bound_on_two_bus_flow():
    case, series = _pair(a=0.7, u_min=1.0, u_max=2.0)
    prog = build_program(case, series, "dc").program
    assert np.allclose(_le_rhs(prog, "voltage_angle_difference_dc_approx"), math.pi / 6 / 0.1)
    assert _le_rhs(prog, "voltage_angle_difference_dc_approx")[0] == pytest.approx(5.236, abs=1e-3)


def test_tree_has_no_kvl_rows():
    case, series = _pair()
    assert build_program(case, series, "dc").program.tag_multiset()["kvl"] == 0


def test_triangle_split_follows_superposition():
    case, series = case_of("case3")
    case = dataclasses.replace(case, sources=(
        dataclasses.replace(case.sources[0], u_max=0.6), case.sources[1]))
    form = build_program(case, series, "dc")
    sol = solve(form.program, tol=1e-9)
    assert sol.optimal
    p1, p2 = sol.value(form.catalog.p)[:, 0]
    assert p2 > 0.1
    # unit injection at bus 1 (bus 2) towards bus 3 splits 2:1 over the direct and
    # the two-hop path; branch order is l12, l13, l23
    expected = p1 * np.array([1, 2, 1]) / 3 + p2 * np.array([-1, 1, 2]) / 3
    assert np.allclose(sol.value(form.catalog.p_ac)[:, 0], expected, atol=1e-6)


def test_u_max_tightening_only_in_dc_family():
    case, series = _pair(x=0.2, a=0.7, f_max=1.0, u_min=1.0, u_max=5.0)
    br = case.ac_branches[0]
    assert tightened_u_max(br) == pytest.approx(math.pi / 6 / (0.2 * 0.7), rel=1e-12)
    for kind, expect in (("dc", 3.74), ("dc-lossy", 3.74), ("lpac", 5.0), ("decoupled", 5.0)):
        form = build_program(case, series, kind)
        assert form.program.ub[form.catalog.u_ac[0]] == pytest.approx(expect, abs=1e-2)
    lossy = build_program(case, series, "dc-lossy", BuildOptions(h_tangents=2))
    assert lossy.tangent_points[0][-1] == pytest.approx(0.7 * tightened_u_max(br))


# -- DC-lossy ----------------------------------------------------------------

def test_tangent_grid():
    pts = tangent_points(0.7, 1.0, 2.0, 3)
    assert np.allclose(pts, [-1.4, -0.9333333, -0.4666667, 0.4666667, 0.9333333, 1.4])
    with pytest.raises(ValueError):
        tangent_points(0.7, 1.0, 2.0, 0)


def test_zero_resistance_cuts_read_nonnegative_loss():
    case, series = _pair(r=0.0)
    form = build_program(case, series, "dc-lossy")
    A, _ = form.program.inequality_system()
    rows = [(a, b) for t, a, b in form.program.le.tags if t == "losses_p_dc"]
    col = form.catalog.p_ac[0, 0]
    for a, b in rows:
        assert np.all(A[a:b, col].toarray() == 0.0)


@given(h=st.integers(1, 6), k=st.integers(0, 11))
def test_cut_touches_quadratic_at_tangent_point(h, k):
    case, series = _pair(r=0.05, u_min=1.0, u_max=2.0, a=0.7)
    form = build_program(case, series, "dc-lossy", BuildOptions(h_tangents=h))
    p0 = form.tangent_points[0][k % (2 * h)]
    r = form.params[0].r
    at = _x(form, u_ac=2.0, p_ac=p0, p_loss=r * p0**2)
    below = _x(form, u_ac=2.0, p_ac=p0, p_loss=r * p0**2 - 1e-6)
    assert "losses_p_dc" not in _broken(form, at, tol=1e-12)
    assert "losses_p_dc" in _broken(form, below, tol=1e-9)


# -- LPAC --------------------------------------------------------------------

def _flows(form, tags, **pt):
    prog = form.program
    x = _x(form, **pt)
    A, b = prog.equality_system()
    return [b[a:z] - A[a:z] @ x for t, a, z in prog.eq.tags if t in tags]


def test_lpac_flat_profile():
    case, series = _pair(r=0.01, b_sh=0.04)
    form = build_program(case, series, "lpac")
    pf, qf, pr, qr = (float(v[0]) for v in _flows(form, ("lpac_p", "lpac_q"),
                                                  v=1.0, theta=0.0, cos=1.0))
    assert pf == pytest.approx(0.0, abs=1e-15) and pr == pytest.approx(0.0, abs=1e-15)
    assert qf == pytest.approx(-0.02) and qr == pytest.approx(-0.02)


def test_cut_coefficient_at_30_degrees():
    expected = (1 - math.sqrt(3) / 2) / (math.pi / 6) ** 2
    assert cosine_cut_coefficient(math.pi / 6) == pytest.approx(expected, rel=1e-14)
    assert cosine_cut_coefficient(math.pi / 6) == pytest.approx(0.48868, abs=1e-5)


def test_lpac_loss_at_cut_bound():
    case, series = _pair(r=0.02, x=0.1)
    form = build_program(case, series, "lpac", BuildOptions(reference_angle=False))
    g = case.ac_branches[0].g
    th = 0.2
    k = cosine_cut_coefficient(math.pi / 6)
    pf, _, pr, _ = (float(v[0]) for v in _flows(
        form, ("lpac_p", "lpac_q"), v=1.0, theta=[[th], [0.0]], cos=1 - k * th**2))
    assert pf + pr == pytest.approx(2 * g * 0.48868 * th**2, rel=1e-5)


def test_lpac_cut_and_cos_bounds():
    case, series = _pair(r=0.02, x=0.1)
    form = build_program(case, series, "lpac", BuildOptions(reference_angle=False))
    k = cosine_cut_coefficient(math.pi / 6)
    th = 0.3
    assert form.program.lb[form.catalog.cos[0, 0]] == pytest.approx(math.cos(math.pi / 6))
    ok = _x(form, v=1.0, theta=[[th], [0.0]], cos=1 - k * th**2)
    bad = _x(form, v=1.0, theta=[[th], [0.0]], cos=1 - k * th**2 + 1e-4)
    assert "cosine_relaxation" not in _broken(form, ok, tol=1e-12)
    assert "cosine_relaxation" in _broken(form, bad)


def test_variable_domains():
    case, series = case_of("case5")
    form = build_program(case, series, "lpac")
    lb, ub = form.program.lb, form.program.ub
    assert np.all(lb[form.catalog.v] == 0.9) and np.all(ub[form.catalog.v] == 1.1)
    th = form.catalog.theta[1:]
    assert np.all(lb[th] == -math.pi / 2) and np.all(ub[th] == math.pi / 2)


# -- decoupled ---------------------------------------------------------------

def _decoupled_pair(r=0.02):
    case, series = _pair(r=r, x=0.1)
    return case, build_program(case, series, "decoupled", BuildOptions(reference_angle=False))


def test_decoupled_loss_window_at_zero_angle():
    case, form = _decoupled_pair()
    g = case.ac_branches[0].g
    top = g * (math.pi / 6) ** 2
    base = dict(v=1.0, u_ac=1.0)
    assert "decoupled_p_losses" not in _broken(form, _x(form, p_loss=0.0, **base))
    assert "decoupled_p_losses" not in _broken(form, _x(form, p_loss=top, **base))
    assert "decoupled_p_losses" in _broken(form, _x(form, p_loss=top + 1e-6, **base))


def test_lossless_line_has_no_decoupled_loss():
    _, form = _decoupled_pair(r=0.0)
    assert "decoupled_p_losses" in _broken(form, _x(form, v=1.0, p_loss=1e-6))


def test_decoupled_bounds_meet_at_angle_limit():
    case, form = _decoupled_pair()
    g = case.ac_branches[0].g
    th = math.pi / 6
    at = dict(v=1.0, theta=[[th], [0.0]])
    assert "decoupled_p_losses" not in _broken(form, _x(form, p_loss=g * th**2, **at), tol=1e-12)
    assert "decoupled_p_losses" in _broken(form, _x(form, p_loss=g * th**2 - 1e-6, **at))


@pytest.mark.parametrize("kind", ["lpac", "decoupled"])
def test_loss_lower_bounds_hold_on_solutions(kind):
    case, series = case_of("case5")
    form = build_program(case, series, kind)
    sol = solve(form.program)
    plan = extract_plan(form, sol)
    idx = case.bus_index()
    for j, br in enumerate(case.ac_branches):
        par = br.parameters(plan.circuits[j])
        th = plan.theta[idx[br.from_bus]] - plan.theta[idx[br.to_bus]]
        if kind == "lpac":
            bound = 2 * par.g * cosine_cut_coefficient(br.theta_max) * th**2
            assert np.all(plan.p_ac[j] + plan.p_ac_rev[j] >= bound - 1e-6)
        else:
            assert np.all(plan.p_loss[j] >= par.g * th**2 - 1e-6)


# -- loss model comparison ---------------------------------------------------

def _factor_series(t, terms=12):
    # 2(1 - cos t)/t^2 = sum_k (-1)^k 2 t^(2k) / (2k+2)!
    return sum((-1) ** k * 2 * t ** (2 * k) / math.factorial(2 * k + 2) for k in range(terms))


def test_loss_factor_examples():
    assert compare_loss_models(math.pi / 6) == pytest.approx(0.97736, abs=1e-5)
    assert compare_loss_models(math.pi / 12) == pytest.approx(0.99430, abs=1e-5)
    assert compare_loss_models(math.pi / 12) == pytest.approx(_factor_series(math.pi / 12),
                                                              rel=1e-13)
    assert 0 < 1 - compare_loss_models(1e-4) <= 4.2e-9


@given(st.floats(1e-6, math.pi / 6))
def test_loss_factor_matches_series(t):
    assert compare_loss_models(t) == pytest.approx(_factor_series(t), rel=1e-12)
    assert compare_loss_models(t) < 1.0


@pytest.mark.parametrize("bad", [0.0, -0.1, math.pi / 6 + 0.01, math.pi / 2])
def test_loss_factor_domain(bad):
    with pytest.raises(ValueError):
        compare_loss_models(bad)


def test_kind_parsing():
    assert FormulationKind.parse("DC-LOSSY") is FormulationKind.DC_LOSSY
    with pytest.raises(ValueError):
        FormulationKind.parse("qc")
