import dataclasses
import logging
import math

import numpy as np
import pytest

from accep.conic import solve
from accep.formulation import BuildOptions, build_program
from accep.netmodel import AcBranch, Bus, NetworkCase
from accep.scp import ScpError, check_angle_blocking, relative_change, run_scp

from conftest import FIXTURE_NAMES, case_of, plan_of


def _probe(x):
    br = AcBranch("l", "a", "b", r=0.0, x=x, a=0.7, f_max=1.0, theta_max=math.pi / 6,
                  u_min=1.0, u_max=3.0)
    return NetworkCase("probe", (Bus("a"), Bus("b")), (br,), ())


def test_blocking_threshold_examples():
    (weak,) = check_angle_blocking(_probe(0.8))
    (strong,) = check_angle_blocking(_probe(0.2))
    assert weak.threshold == pytest.approx(math.pi / 6 / 0.56, rel=1e-12)
    assert weak.threshold == pytest.approx(0.935, abs=5e-4) and weak.flagged
    assert strong.threshold == pytest.approx(3.74, abs=5e-3) and not strong.flagged


@pytest.mark.parametrize("name", [n for n in FIXTURE_NAMES if n != "blocking"])
def test_regular_fixtures_raise_no_flags(name):
    case, _ = case_of(name)
    assert not any(f.flagged for f in check_angle_blocking(case))


def test_relative_change():
    assert relative_change(np.zeros(3), np.zeros(3)) == 0.0
    assert relative_change(np.zeros(2), np.ones(2)) == math.inf
    assert relative_change(np.array([3.0, 4.0]), np.array([3.0, 0.0])) == pytest.approx(0.8)


def test_fixed_network_converges_at_once():
    plan = plan_of("weak3", "dc")
    assert plan.iterations == 1 and plan.converged
    assert plan.history[0]["delta"] == 0.0


def test_case5_congested_line_expands():
    case, _ = case_of("case5")
    plan = plan_of("case5", "dc")
    u_min = np.array([br.u_min for br in case.ac_branches])
    assert np.any(plan.u_ac > u_min + 1e-3)
    assert plan.converged and plan.iterations <= 6
    assert plan.history[-1]["delta"] <= 0.05


@pytest.mark.parametrize("kind", ["dc", "dc-lossy", "lpac", "decoupled"])
def test_final_parameters_match_returned_expansion(kind):
    case, _ = case_of("case5")
    plan = plan_of("case5", kind)
    assert np.array_equal(plan.circuits, plan.u_ac)
    for j, br in enumerate(case.ac_branches):
        lo, hi = br.u_min, br.u_max
        assert lo - 1e-9 <= plan.u_ac[j] <= hi + 1e-9
        par = br.parameters(plan.u_ac[j])
        assert par.x * plan.u_ac[j] == pytest.approx(br.x, rel=1e-12)


def test_infinite_tolerance_is_one_solve_at_minimum_circuits():
    case, series = case_of("case5")
    plan = run_scp(case, series, "dc", tol=math.inf)
    u_min = {br.id: br.u_min for br in case.ac_branches}
    form = build_program(case, series, "dc", BuildOptions(circuits=u_min, fixed_ac=u_min))
    sol = solve(form.program)
    assert plan.iterations == 0
    assert plan.objective == pytest.approx(sol.objective, rel=1e-9)
    assert np.allclose(plan.u_ac, list(u_min.values()))


def test_first_iterate_uses_minimum_circuits():
    case, series = case_of("case5")
    plan = run_scp(case, series, "dc", tol=0.0, max_iters=1)
    form = build_program(case, series, "dc")  # parameters default to u_min
    sol = solve(form.program)
    assert plan.history[0]["objective"] == pytest.approx(sol.objective, rel=1e-9)


def test_iteration_cap_returns_flagged_iterate():
    case, series = case_of("case5")
    plan = run_scp(case, series, "dc", tol=0.0, max_iters=2)
    assert not plan.converged and plan.iterations == 2
    best = min(h["delta"] for h in plan.history)
    assert best < math.inf


def test_solver_failure_aborts():
    case, series = case_of("case3")
    heavy = series.scaled_loads(50.0)
    with pytest.raises(ScpError) as info:
        run_scp(case, heavy, "dc")
    assert info.value.iteration == 1
    assert info.value.status != "optimal"


def test_iteration_log_lines(caplog):
    case, series = case_of("case3")
    with caplog.at_level(logging.INFO, logger="accep.scp"):
        run_scp(case, series, "dc")
    lines = [r.getMessage() for r in caplog.records if r.getMessage().startswith("scp k=")]
    assert lines and all("delta=" in m and "objective=" in m and "circuits_added=" in m
                         for m in lines)


def test_blocked_branch_cannot_gain_capacity():
    case, series = case_of("blocking")
    plan = run_scp(case, series, "dc")
    j = [br.id for br in case.ac_branches].index("l34")
    # the DC family caps l34 at its threshold, which lies below one circuit
    assert plan.u_ac[j] == pytest.approx(case.ac_branches[j].u_min, abs=1e-6)
