import xml.etree.ElementTree as ET

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import straight_reach
from reachintent.core import ReachInferenceError, SchemaError
from reachintent.fitting import Trial
from reachintent.harness import (
    LATE_FRACTIONS,
    SITTING_SHIFT,
    STANDING_FRACTIONS,
    ExperimentConfig,
    MetricsTable,
    adjust_targets_to_endpoints,
    bootstrap_ci,
    compare_models,
    emit_report,
    fractions_for,
    grid_adjacent,
    grid_cell,
    obstacle_scene,
    over_obstacle_targets,
    run_experiment,
    sitting_scene,
    start_state,
    subsample_distractors,
    target_layout_grid,
)
from reachintent.kinematics import min_clearance
from reachintent.planner import wrist_of


def test_layout():
    ts = target_layout_grid()
    assert [t.id for t in ts] == list(range(1, 19))
    assert grid_cell(1) == (0, 0) and grid_cell(18) == (2, 5) and grid_cell(7) == (1, 0)
    np.testing.assert_allclose(ts[1].position - ts[0].position, [0.25, 0, 0])
    np.testing.assert_allclose(ts[6].position - ts[0].position, [0, 0.25, 0])


def test_adjacency_is_eight_neighbourhood():
    assert grid_adjacent(1, 2) and grid_adjacent(1, 7) and grid_adjacent(1, 8)
    assert not grid_adjacent(1, 3) and not grid_adjacent(1, 13) and not grid_adjacent(6, 7)
    assert not grid_adjacent(4, 4)


def test_protocol_constants():
    assert STANDING_FRACTIONS == (0.20, 0.35, 0.50, 0.65, 0.80)
    assert LATE_FRACTIONS == (0.35, 0.45, 0.55, 0.65, 0.75)
    assert fractions_for("sitting", STANDING_FRACTIONS, SITTING_SHIFT) == [0.3, 0.45, 0.6, 0.75, 0.9]
    assert fractions_for("sitting", (0.95,), SITTING_SHIFT) == [1.0]
    assert fractions_for("standing", LATE_FRACTIONS, SITTING_SHIFT) == list(LATE_FRACTIONS)


def test_obstacle_scene(wall_scene):
    assert over_obstacle_targets(wall_scene) == [8, 9, 10, 11, 14, 15, 16, 17]
    assert over_obstacle_targets(sitting_scene()) == []


def test_seated_start_is_clear():
    sc = sitting_scene()
    s = start_state(sc)
    assert min_clearance(s, sc.body, sc) > 0
    assert wrist_of(s, sc)[2] > sc.table_height
    assert start_state(sc, "left").hand == "left"


@given(st.integers(1, 18), st.integers(2, 4), st.integers(0, 2**31 - 1))
def test_subsample_constraints(scene, g, n, seed):
    sub = subsample_distractors(scene, g, n, seed)
    ids = sub.target_ids
    assert g in ids and len(ids) == n + 1
    assert all(not grid_adjacent(a, b) for a in ids for b in ids if a != b)
    assert subsample_distractors(scene, g, n, seed).target_ids == ids
    assert 0.2 <= 1 / len(ids) <= 0.5


def test_subsample_infeasible_names_bound(scene):
    with pytest.raises(ReachInferenceError, match="n_distractors=6"):
        subsample_distractors(scene, 9, 6, 0)
    with pytest.raises(ValueError):
        subsample_distractors(scene, 9, 1, 0)


def test_adjust_targets(scene):
    t3 = scene.target(3).position
    trajs = [straight_reach([0, -0.1, 1.0], t3 + [0.02, 0, 0], true_target=3),
             straight_reach([0, -0.1, 1.0], t3 + [0.04, 0, 0], true_target=3),
             straight_reach([0, -0.1, 1.0], [2.0, 0.3, 0.9], true_target=4)]
    moved, flags = adjust_targets_to_endpoints(scene, trajs)
    np.testing.assert_allclose(moved.target(3).position, t3 + [0.03, 0, 0], atol=1e-12)
    assert 4 not in moved.target_ids
    np.testing.assert_array_equal(moved.target(5).position, scene.target(5).position)
    assert flags
    again, _ = adjust_targets_to_endpoints(moved, trajs[:2])
    np.testing.assert_allclose(again.target(3).position, moved.target(3).position)


def test_experiment_config_validation():
    with pytest.raises(SchemaError):
        ExperimentConfig(("a",), (0.5, 0.3))
    with pytest.raises(SchemaError):
        ExperimentConfig(("a",), (0.0, 0.3))
    with pytest.raises(SchemaError):
        ExperimentConfig(("a",), models=(("oracle", None),))


@pytest.fixture(scope="module")
def small_run(scene):
    store = {f"r{g}": Trial(straight_reach([0.18, -0.1, 0.95], scene.target(g).position, true_target=g),
                            scene) for g in (2, 9, 16)}
    cfg = ExperimentConfig(tuple(store), (0.2, 0.8), (("distance", None), ("linh", None)), seed=3)
    return cfg, store, run_experiment(cfg, store)


def test_run_experiment_rows(small_run):
    cfg, store, table = small_run
    assert len(table.outcomes) == 3 * 2 * 2
    assert len(table) == 3 * 2 * 2
    o = table.outcomes[0]
    assert o.prefix_len == 6  # ceil(0.2 * 30)
    late = [o for o in table.outcomes if o.model == "linh" and o.stopping_fraction == 0.8]
    assert all(o.predicted == o.target and o.rank == 1 for o in late)


def test_run_experiment_deterministic(small_run):
    cfg, store, table = small_run
    assert run_experiment(cfg, store).to_csv() == table.to_csv()


def test_csv_roundtrip(small_run):
    table = small_run[2]
    assert MetricsTable.from_csv(table.to_csv()).rows == table.rows


def test_aggregate(small_run):
    rows = small_run[2].aggregate(("stopping_fraction", "model"))
    assert [(r["stopping_fraction"], r["model"]) for r in rows] == [
        (0.2, "distance"), (0.2, "linh"), (0.8, "distance"), (0.8, "linh")]
    assert all(r["n"] == 3 for r in rows)


def test_emit_report(small_run, tmp_path):
    table = small_run[2]
    rows = [{"subject": s, "stopping_fraction": 0.5, "model": m, "mean_log_posterior": v}
            for s, m, v in (("a", "x", -1.0), ("a", "y", -2.0), ("b", "x", -1.0), ("b", "y", -0.5))]
    comp = compare_models(rows)
    paths = emit_report(table, tmp_path / "a", ("csv", "svg"), comp)
    assert [p.name for p in paths] == ["metrics.csv", "metrics.svg", "metrics_compare.svg"]
    for p in paths[1:]:
        root = ET.fromstring(p.read_text())
        assert root.tag.endswith("svg")
    again = emit_report(table, tmp_path / "b", ("csv", "svg"), comp)
    for p, q in zip(paths, again):
        assert p.read_bytes() == q.read_bytes()
    with pytest.raises(ReachInferenceError):
        emit_report(MetricsTable([]), tmp_path / "c")
    with pytest.raises(SchemaError):
        emit_report(table, tmp_path / "d", ("pdf",))


def test_compare_models():
    rows = [{"subject": s, "stopping_fraction": f, "model": m, "mean_log_posterior": v}
            for s, f, m, v in (("a", 0.2, "x", -1.0), ("a", 0.2, "y", -1.0),
                               ("b", 0.2, "x", -0.5), ("b", 0.2, "y", -2.0))]
    comp = compare_models(rows)
    win = {w["model"]: w["fraction"] for w in comp.winners}
    assert win == {"x": 0.75, "y": 0.25}
    diffs = {d["unit"]: d["difference"] for d in comp.differences}
    assert diffs == {"a": 0.0, "b": 1.5}
    with pytest.raises(ReachInferenceError):
        compare_models(rows[:3])
    with pytest.raises(ReachInferenceError):
        compare_models([r for r in rows if r["model"] == "x"])


def test_identical_models_zero_difference():
    rows = [{"subject": s, "stopping_fraction": 0.5, "model": m, "mean_log_posterior": -float(i)}
            for i, s in enumerate("abc") for m in ("p", "q")]
    comp = compare_models(rows)
    assert all(d["difference"] == 0.0 for d in comp.differences)


def test_bootstrap_ci():
    lo, hi = bootstrap_ci(np.arange(100.0), rng_seed=1)
    assert lo < 49.5 < hi
    assert bootstrap_ci(np.arange(100.0), rng_seed=1) == (lo, hi)
    with pytest.raises(ValueError):
        bootstrap_ci([])
