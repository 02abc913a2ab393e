import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from accep.conic import ConvexProgram, check_solution, solve
from accep.formulation import build_program

from conftest import case_of


def _scalar(lb=-np.inf, ub=np.inf):
    prog = ConvexProgram()
    return prog, prog.add_var("x", 1, lb, ub)


def test_lower_bound_row():
    prog, x = _scalar()
    prog.add_objective(x, 1.0)
    prog.add_constraints("floor", ">=", [(x, 1.0)], 3.0)
    sol = solve(prog)
    assert sol.optimal
    assert sol.x[0] == pytest.approx(3.0, abs=1e-6)
    # a binding >= row of a minimisation carries a nonnegative multiplier
    assert sol.duals("floor")[0] >= -1e-8
    assert sol.duals("floor")[0] == pytest.approx(1.0, abs=1e-5)


def test_cone_section():
    prog, x = _scalar()
    prog.add_objective(x, -1.0)
    prog.add_soc("disc", [([], 2.0), ([(x, 1.0)], 0.0), ([], 1.0)])
    sol = solve(prog)
    assert sol.optimal
    assert sol.x[0] == pytest.approx(math.sqrt(3.0), abs=1e-6)


def test_infeasible_pair():
    prog, x = _scalar()
    prog.add_objective(x, 1.0)
    prog.add_constraints("lo", ">=", [(x, 1.0)], 1.0)
    prog.add_constraints("hi", "<=", [(x, 1.0)], 0.0)
    assert solve(prog).status == "infeasible"


def test_infeasible_bounds_caught_by_presolve():
    prog, x = _scalar(lb=2.0, ub=2.0)
    prog.add_constraints("hi", "<=", [(x, 1.0)], 1.0)
    assert solve(prog).status == "infeasible"


def test_unbounded_ray():
    prog, x = _scalar()
    prog.add_objective(x, -1.0)
    prog.add_constraints("lo", ">=", [(x, 1.0)], 0.0)
    assert solve(prog).status in ("unbounded", "infeasible")
    assert solve(prog).status != "optimal"


def test_check_solution_names_violated_cone():
    prog, x = _scalar()
    y = prog.add_var("y", 1, -np.inf, np.inf)
    prog.add_soc("ring", [([], 1.0), ([(x, 1.0)], 0.0), ([(y, 1.0)], 0.0)])
    ok = check_solution(prog, np.array([0.6, 0.8]))
    assert ok.ok(1e-9)
    bad = check_solution(prog, np.array([0.66, 0.88]), tol=1e-9)  # norm 1.1
    assert bad.by_class["soc"] == pytest.approx(0.1, abs=1e-12)
    assert bad.worst["soc"][0] == "ring"
    assert [v[1] for v in bad.violations] == ["ring"]


def test_check_solution_reports_rows_and_bounds():
    prog, x = _scalar(lb=0.0, ub=1.0)
    prog.add_constraints("cap", "<=", [(x, 2.0)], 1.0)
    rep = check_solution(prog, np.array([1.5]))
    assert rep.by_class["bounds"] == pytest.approx(0.5)
    assert rep.by_class["le"] == pytest.approx(2.0)


def test_case5_solution_reverifies():
    case, series = case_of("case5")
    for kind in ("dc", "lpac"):
        form = build_program(case, series, kind)
        sol = solve(form.program)
        assert sol.optimal
        assert check_solution(form.program, sol.x).max_violation <= 1e-6


def test_deterministic_objective():
    case, series = case_of("case5")
    a = solve(build_program(case, series, "decoupled").program)
    b = solve(build_program(case, series, "decoupled").program)
    assert a.status == b.status == "optimal"
    assert abs(a.objective - b.objective) <= 1e-10


def test_dump_is_canonical():
    prog, x = _scalar(0.0, 4.0)
    prog.add_objective(x, 2.0)
    prog.add_constraints("cap", "<=", [(x, 1.0)], 3.0)
    text = prog.dump()
    assert text == prog.dump()
    assert "cap" in text and text.splitlines()[0] == "vars 1"


@st.composite
def random_programs(draw):
    seed = draw(st.integers(0, 2**31 - 1))
    rng = np.random.default_rng(seed)
    n = draw(st.integers(2, 6))
    m = draw(st.integers(1, 6))
    x0 = rng.uniform(0.5, 2.0, n)
    A = rng.normal(size=(m, n))
    b = A @ x0 + rng.uniform(0.1, 1.0, m)
    c = rng.normal(size=n)
    with_cone = draw(st.booleans())
    return n, A, b, c, x0, with_cone


@settings(max_examples=25, deadline=None)
@given(random_programs())
def test_weak_duality(data):
    n, A, b, c, x0, with_cone = data
    prog = ConvexProgram()
    x = prog.add_var("x", n, 0.0, 5.0)
    prog.add_objective(x, c)
    prog.add_matrix("rows", "<=", np.asarray(A), b)
    if with_cone:
        # ||x[:2] - x0[:2]|| <= 1 keeps x0 feasible
        prog.add_soc("ball", [([], 1.0), ([(x[0:1], 1.0)], -x0[0]), ([(x[1:2], 1.0)], -x0[1])])
    tol = 1e-7
    sol = solve(prog, tol=tol)
    assert sol.optimal
    assert sol.dual_objective <= sol.objective + 10 * tol * max(1.0, abs(sol.objective))
    assert sol.objective <= prog.objective_value(x0) + 1e-6
    assert check_solution(prog, sol.x).max_violation <= 1e-6
    assert np.all(sol.z_le >= -1e-9)


def test_external_backend_agrees():
    pytest.importorskip("clarabel")
    case, series = case_of("case5")
    prog = build_program(case, series, "lpac").program
    ours = solve(prog, tol=1e-8)
    theirs = solve(prog, tol=1e-8, backend="clarabel")
    assert ours.optimal and theirs.optimal
    assert ours.objective == pytest.approx(theirs.objective, rel=1e-6)
