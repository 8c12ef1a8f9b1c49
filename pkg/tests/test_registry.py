import json

import pytest
from hypothesis import given, strategies as st

from smap.registry import (
    Dataset,
    DatasetConstraintViolation,
    Metrics,
    Model,
    ModelConstraintViolation,
    PerformanceRecord,
    Registry,
    Scenario,
    UnknownReferenceError,
    ValidationError,
    lint_registry,
    load_registry,
    match_constraints,
    register_entity,
    registry_from_json,
    registry_to_json,
    save_registry,
    select_candidate_models,
    select_suitable_dataset,
)


def make_dataset(id, tags, downloads, collection_time="2020-01-01/2020-12-31"):
    return Dataset(id, tuple(tags), {"downloads": downloads, "collection_time": collection_time, "location": "x"})


def make_model(id, tags, citations=10, stars=5, requirements=None):
    return Model(id, tuple(tags), {"citations": citations, "github_stars": stars}, requirements or {})


def test_register_scenario_round_trip():
    registry = register_entity(Registry(), Scenario("s1", "traffic speed prediction", {}))
    assert registry.scenarios["s1"].scenario_type == "traffic speed prediction"
    assert registry.revision == 1


def test_register_rejects_negative_citations():
    bad = Model("m1", ("t",), {"citations": -1, "github_stars": 0})
    with pytest.raises(ValidationError) as excinfo:
        register_entity(Registry(), bad)
    assert excinfo.value.field == "citations"


def test_register_rejects_dangling_performance_reference():
    registry = register_entity(Registry(), Scenario("s1", "t", {}))
    registry = register_entity(registry, make_model("m1", ["t"]))
    record = PerformanceRecord("s1", "unknown-dataset", "m1", Metrics(mae=1.0))
    with pytest.raises(UnknownReferenceError):
        register_entity(registry, record)


def test_duplicate_id_replaces_and_bumps_revision():
    registry = register_entity(Registry(), Scenario("s1", "a", {}))
    registry = register_entity(registry, Scenario("s1", "b", {}))
    assert registry.scenarios["s1"].scenario_type == "b"
    assert registry.revision == 2


def test_revision_strictly_increases_across_mutations():
    registry = Registry()
    seen = [registry.revision]
    for i in range(5):
        registry = register_entity(registry, Scenario(f"s{i}", "t", {}))
        seen.append(registry.revision)
    assert seen == sorted(set(seen))


def test_register_returns_new_snapshot():
    first = register_entity(Registry(), Scenario("s1", "t", {}))
    second = register_entity(first, Scenario("s2", "t", {}))
    assert "s2" not in first.scenarios and "s2" in second.scenarios


def test_mape_above_one_rejected():
    registry = register_entity(Registry(), Scenario("s1", "t", {}))
    registry = register_entity(registry, make_dataset("d1", ["t"], 1))
    registry = register_entity(registry, make_model("m1", ["t"]))
    bad = PerformanceRecord("s1", "d1", "m1", Metrics(mae=1.0, rmse=2.0, mape=1.5))
    with pytest.raises(ValidationError):
        register_entity(registry, bad)


def test_rmse_below_mae_is_lint_warning_not_error():
    registry = register_entity(Registry(), Scenario("s1", "t", {}))
    registry = register_entity(registry, make_dataset("d1", ["t"], 1))
    registry = register_entity(registry, make_model("m1", ["t"]))
    registry = register_entity(registry, PerformanceRecord("s1", "d1", "m1", Metrics(mae=5.0, rmse=1.0)))
    warnings = lint_registry(registry)
    assert len(warnings) == 1 and "rmse" in warnings[0]


# --- match_constraints ---------------------------------------------------------

def test_match_empty_requirements_is_vacuous():
    assert match_constraints({}, {}) is True


def test_match_requirement_subset():
    assert match_constraints({"latency": "realtime", "gpu": "no"}, {"latency": "realtime"}) is True


def test_match_value_mismatch():
    assert match_constraints({"latency": "batch"}, {"latency": "realtime"}) is False


def test_match_trims_whitespace():
    assert match_constraints({"latency": " realtime "}, {"latency": "realtime"}) is True


def test_match_is_case_sensitive():
    assert match_constraints({"latency": "Realtime"}, {"latency": "realtime"}) is False


@given(
    constraints=st.dictionaries(st.text(min_size=1, max_size=8), st.text(max_size=8), max_size=5),
    r1=st.dictionaries(st.text(min_size=1, max_size=8), st.text(max_size=8), max_size=4),
    r2=st.dictionaries(st.text(min_size=1, max_size=8), st.text(max_size=8), max_size=4),
)
def test_match_is_conjunctive_over_disjoint_requirement_maps(constraints, r1, r2):
    r2 = {k: v for k, v in r2.items() if k not in r1}
    merged = {**r1, **r2}
    assert match_constraints(constraints, merged) == (
        match_constraints(constraints, r1) and match_constraints(constraints, r2)
    )


# --- dataset selection ----------------------------------------------------------

def test_select_dataset_max_downloads():
    s = Scenario("s1", "t", {})
    picked = select_suitable_dataset(s, [make_dataset("a", ["t"], 100), make_dataset("b", ["t"], 500)])
    assert picked.id == "b"


def test_select_dataset_tie_breaks_on_end_date_then_id():
    s = Scenario("s1", "t", {})
    newer = make_dataset("b", ["t"], 100, "2020-01-01/2021-06-30")
    older = make_dataset("a", ["t"], 100, "2020-01-01/2020-06-30")
    assert select_suitable_dataset(s, [older, newer]).id == "b"
    twin = make_dataset("c", ["t"], 100, "2020-01-01/2021-06-30")
    assert select_suitable_dataset(s, [twin, newer, older]).id == "b"


def test_select_dataset_open_range_sorts_most_recent():
    s = Scenario("s1", "t", {})
    open_ended = make_dataset("z", ["t"], 100, "2009-01-01/..")
    closed = make_dataset("a", ["t"], 100, "2020-01-01/2024-12-31")
    assert select_suitable_dataset(s, [closed, open_ended]).id == "z"


def test_select_dataset_no_match_raises():
    with pytest.raises(DatasetConstraintViolation):
        select_suitable_dataset(Scenario("s1", "t", {}), [make_dataset("a", ["other"], 10)])


def test_select_dataset_order_invariant():
    s = Scenario("s1", "t", {})
    pool = [
        make_dataset("a", ["t"], 100),
        make_dataset("b", ["t"], 300),
        make_dataset("c", ["t", "u"], 300, "2020-01-01/2022-01-01"),
        make_dataset("d", ["u"], 900),
    ]
    import itertools

    picks = {select_suitable_dataset(s, list(perm)).id for perm in itertools.permutations(pool)}
    assert len(picks) == 1


# --- candidate model selection --------------------------------------------------

def test_select_candidates_filters_and_sorts_by_id():
    s = Scenario("s1", "t", {})
    models = [make_model("zed", ["t"]), make_model("abc", ["t", "u"]), make_model("mid", ["u"])]
    picked = select_candidate_models(s, models)
    assert [m.id for m in picked] == ["abc", "zed"]
    assert all(s.scenario_type in m.model_type for m in picked)


def test_select_candidates_all_matching_pass_through():
    s = Scenario("s1", "t", {})
    models = [make_model(f"m{i}", ["t"]) for i in range(4)]
    assert [m.id for m in select_candidate_models(s, models)] == ["m0", "m1", "m2", "m3"]


def test_select_candidates_empty_raises():
    with pytest.raises(ModelConstraintViolation):
        select_candidate_models(Scenario("s1", "t", {}), [make_model("m", ["u"])])


# --- persistence ----------------------------------------------------------------

def full_registry():
    registry = Registry()
    registry = register_entity(registry, Scenario("s1", "t", {"latency": "realtime"}))
    registry = register_entity(registry, make_dataset("d1", ["t"], 42))
    registry = register_entity(registry, make_model("m1", ["t"], requirements={"latency": "realtime"}))
    registry = register_entity(registry, PerformanceRecord("s1", "d1", "m1", Metrics(mae=1.0, rmse=2.0, mape=0.1)))
    return registry


def test_registry_json_round_trip(tmp_path):
    registry = full_registry()
    path = tmp_path / "registry.json"
    save_registry(registry, path)
    loaded = load_registry(path)
    assert loaded == registry
    assert loaded.revision == registry.revision


def test_registry_json_field_names(tmp_path):
    path = tmp_path / "registry.json"
    save_registry(full_registry(), path)
    doc = json.loads(path.read_text())
    assert set(doc) == {"scenarios", "datasets", "models", "performance", "revision"}
    assert set(doc["scenarios"][0]) == {"id", "scenario_type", "constraints"}
    assert set(doc["models"][0]) == {"id", "model_type", "features", "requirements"}
    assert set(doc["performance"][0]) == {"scenario_id", "dataset_id", "model_id", "metrics"}


def test_registry_with_absent_metric_round_trips():
    registry = register_entity(Registry(), Scenario("s1", "t", {}))
    registry = register_entity(registry, make_dataset("d1", ["t"], 1))
    registry = register_entity(registry, make_model("m1", ["t"]))
    registry = register_entity(registry, PerformanceRecord("s1", "d1", "m1", Metrics(mae=1.0, rmse=None, mape=None)))
    loaded = registry_from_json(registry_to_json(registry))
    record = loaded.performance[("s1", "d1", "m1")]
    assert record.metrics.mask() == (1, 0, 0)
