import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from accep.caseio import (
    DISPATCH_COLUMNS,
    FLOW_COLUMNS,
    PLAN_COLUMNS,
    RESULT_FILES,
    CaseParseError,
    DanglingReferenceError,
    ResultBundle,
    SchemaVersionError,
    UnknownKeyError,
    bundle_from_plan,
    dump_case,
    load_case,
    parse_case,
    plan_from_bundle,
    read_results,
    save_case,
    write_results,
)

from conftest import case_of, data_path, plan_of


def _doc(name="case5"):
    return json.loads(data_path(name).read_text())


def test_case5_shape():
    case, series = load_case(data_path("case5"))
    assert len(case.buses) == 5 and len(case.ac_branches) == 6
    for table in (series.load_p, series.load_q, series.availability):
        assert all(len(v) == series.T for v in table.values())


def test_series_length_mismatch():
    doc = _doc()
    bus, vals = next(iter(doc["snapshots"]["load_p"].items()))
    doc["snapshots"]["load_p"][bus] = vals + [vals[-1], vals[-1]]
    with pytest.raises(DanglingReferenceError, match="length"):
        parse_case(json.dumps(doc))


def test_unknown_bus_reference():
    doc = _doc()
    doc["ac_branches"][0]["to_bus"] = "nowhere"
    with pytest.raises(DanglingReferenceError, match="nowhere"):
        parse_case(json.dumps(doc))


def test_unknown_key_is_named():
    doc = _doc()
    doc["frequnecy"] = 50
    with pytest.raises(UnknownKeyError, match="frequnecy") as err:
        parse_case(json.dumps(doc))
    assert err.value.key == "frequnecy"


def test_nested_unknown_key_is_named():
    doc = _doc()
    doc["buses"][0]["voltage"] = 1.0
    with pytest.raises(UnknownKeyError, match="voltage"):
        parse_case(json.dumps(doc))


def test_parse_error_position():
    text = '{\n  "schema_version": 1,\n  "buses": [,]\n}'
    with pytest.raises(CaseParseError) as err:
        parse_case(text)
    assert (err.value.line, err.value.column) == (3, 13)


def test_schema_version_mismatch():
    doc = _doc()
    doc["schema_version"] = 2
    with pytest.raises(SchemaVersionError):
        parse_case(json.dumps(doc))


def test_series_from_csv(tmp_path):
    doc = _doc("case3")
    snaps = doc["snapshots"]
    cols = ["delta"] + [f"load_p:{k}" for k in snaps["load_p"]]
    rows = zip(snaps["delta"], *snaps["load_p"].values())
    lines = [",".join(cols)] + [",".join(repr(float(x)) for x in r) for r in rows]
    (tmp_path / "series.csv").write_text("\n".join(lines) + "\n")
    doc["snapshots"] = {"path": "series.csv", **{k: v for k, v in snaps.items()
                                                 if k not in ("delta", "load_p")}}
    (tmp_path / "case.json").write_text(json.dumps(doc))
    case, series = load_case(tmp_path / "case.json")
    _, ref = case_of("case3")
    assert np.array_equal(series.delta, ref.delta)
    for b in case.buses:
        assert np.array_equal(series.p_load(b.id), ref.p_load(b.id))


@pytest.mark.parametrize("name", ["case3", "case5", "case24"])
def test_case_round_trip(name, tmp_path):
    case, series = case_of(name)
    save_case(tmp_path / "c.json", case, series)
    case2, series2 = load_case(tmp_path / "c.json")
    assert case2 == case
    assert np.array_equal(series2.delta, series.delta)
    for b in case.buses:
        assert np.array_equal(series2.p_load(b.id), series.p_load(b.id))
        assert np.array_equal(series2.q_load(b.id), series.q_load(b.id))
    assert dump_case(case2, series2) == dump_case(case, series)


def test_result_round_trip_is_exact(tmp_path):
    case, series = case_of("case5")
    plan = plan_of("case5", "dc")
    bundle = bundle_from_plan(case, series, plan)
    files = write_results(bundle, tmp_path)
    assert [f.name for f in files] == list(RESULT_FILES)
    back = read_results(tmp_path)
    assert back == bundle
    plan2 = plan_from_bundle(case, back)
    for name in ("u_s", "u_ac", "u_dc", "p", "q", "theta", "p_ac", "p_loss", "e"):
        assert np.array_equal(getattr(plan2, name), getattr(plan, name)), name


def test_dc_bundle_has_one_flow_row_per_branch_and_snapshot():
    case, series = case_of("case5")
    bundle = bundle_from_plan(case, series, plan_of("case5", "dc"))
    for t in range(series.T):
        ac = [r for r in bundle.flows if r["t"] == t and r["element"] == "ac"]
        assert len(ac) == 6


def test_empty_snapshot_set_gives_headers_only(tmp_path):
    bundle = ResultBundle(plan=[], dispatch=[], flows=[], objective={"delta": []})
    write_results(bundle, tmp_path)
    for name, cols in (("plan.csv", PLAN_COLUMNS), ("dispatch.csv", DISPATCH_COLUMNS),
                       ("flows.csv", FLOW_COLUMNS)):
        assert (tmp_path / name).read_text() == ",".join(cols) + "\n"
    assert read_results(tmp_path) == bundle


def test_written_files_are_deterministic(tmp_path):
    case, series = case_of("case5")
    bundle = bundle_from_plan(case, series, plan_of("case5", "dc"))
    write_results(bundle, tmp_path / "a")
    write_results(bundle, tmp_path / "b")
    for name in RESULT_FILES:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


_finite = st.floats(allow_nan=False, allow_infinity=False)


@settings(max_examples=50, deadline=None)
@given(values=st.lists(st.tuples(_finite, _finite, _finite), min_size=0, max_size=6),
       obj=_finite)
def test_random_bundles_survive_round_trip(values, obj, tmp_path_factory):
    flows = [{c: None for c in FLOW_COLUMNS} | {"element": "ac", "id": f"l{k}", "t": k,
                                               "p": a, "q": b, "theta": c}
             for k, (a, b, c) in enumerate(values)]
    bundle = ResultBundle(plan=[], dispatch=[], flows=flows,
                          objective={"objective": obj, "delta": [1.0] * len(values)})
    out = tmp_path_factory.mktemp("bundle")
    write_results(bundle, out)
    assert read_results(out) == bundle
