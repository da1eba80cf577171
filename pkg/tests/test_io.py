import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import straight_reach
from reachintent.core import SchemaError
from reachintent.fitting import ResponseRecord
from reachintent.harness import obstacle_scene, sitting_scene
from reachintent.io import (
    default_config,
    dump_json,
    fit_config_from_dict,
    fit_config_to_dict,
    params_doc,
    parse_config,
    parse_params_doc,
    parse_responses_text,
    parse_scene,
    parse_trajectory_text,
    read_json,
    responses_to_csv,
    scene_from_dict,
    scene_to_dict,
    trajectory_to_jsonl,
    write_scene,
)
from reachintent.fitting import FitConfig
from reachintent.models.params import LinHParams, default_params


@pytest.mark.parametrize("make", [obstacle_scene, sitting_scene])
def test_scene_roundtrip(make, tmp_path):
    sc = make()
    back = scene_from_dict(json.loads(dump_json(scene_to_dict(sc))))
    np.testing.assert_array_equal(back.target_positions(), sc.target_positions())
    assert back.body == sc.body and back.condition_tag == sc.condition_tag
    assert len(back.obstacles) == len(sc.obstacles)
    write_scene(sc, tmp_path / "s.json")
    assert dump_json(scene_to_dict(parse_scene(tmp_path / "s.json"))) == (tmp_path / "s.json").read_text()


def test_scene_errors_name_the_field(scene):
    d = scene_to_dict(scene)
    with pytest.raises(SchemaError, match="unknown keys"):
        scene_from_dict({**d, "colour": "red"})
    bad = json.loads(json.dumps(d))
    bad["targets"][2]["position"] = [0, 1]
    with pytest.raises(SchemaError, match=r"targets\[2\]"):
        scene_from_dict(bad)


def test_invalid_json_reports_line(tmp_path):
    p = tmp_path / "x.json"
    p.write_text('{\n"a": 1,\n}\n')
    with pytest.raises(SchemaError, match="line 3"):
        read_json(p)
    with pytest.raises(FileNotFoundError):
        read_json(tmp_path / "none.json")


@given(st.integers(2, 20), st.sampled_from(["left", "right"]), st.integers(1, 18))
def test_trajectory_roundtrip(n, hand, target):
    traj = straight_reach([0, 0, 1], [0.3, 0.4, 0.8], n=n, true_target=target, hand=hand)
    text = trajectory_to_jsonl(traj, scene_ref="scene.json")
    back, header = parse_trajectory_text(text)
    assert header["scene_ref"] == "scene.json"
    assert back.true_target == target and back.active_hand == hand and len(back) == n
    for a, b in zip(traj.frames, back.frames):
        assert a.t == b.t
        np.testing.assert_array_equal(a.joints[f"wrist_{hand}"], b.joints[f"wrist_{hand}"])
    assert trajectory_to_jsonl(back, "scene.json") == text


def test_trajectory_errors_carry_line_numbers():
    text = trajectory_to_jsonl(straight_reach([0, 0, 1], [0.3, 0.4, 0.8], n=4)).splitlines()
    broken = "\n".join(text[:2] + ['{"t": 0.1, "joints": {"wrist_right": [0, 0]}}'] + text[3:])
    with pytest.raises(SchemaError, match=r"f\.jsonl:3"):
        parse_trajectory_text(broken, "f.jsonl")
    with pytest.raises(SchemaError, match=r":2: invalid JSON"):
        parse_trajectory_text(text[0] + "\n{oops\n", "f.jsonl")
    with pytest.raises(SchemaError, match="header"):
        parse_trajectory_text("\n".join(text[1:]), "f.jsonl")
    with pytest.raises(SchemaError, match="at least 2 frames"):
        parse_trajectory_text("\n".join(text[:2]), "f.jsonl")
    with pytest.raises(SchemaError, match="unknown keys"):
        parse_trajectory_text('{"actor_id": "a", "mood": 1}\n' + "\n".join(text[1:]), "f.jsonl")


def test_responses_roundtrip_and_errors():
    recs = [ResponseRecord("s1", "t1", "standing", 0.35, 4, 3, "a.jsonl"),
            ResponseRecord("s2", "t2", "sitting", 0.45, 9, 9, "b.jsonl")]
    text = responses_to_csv(recs)
    assert parse_responses_text(text) == recs
    lines = text.splitlines()
    with pytest.raises(SchemaError, match="row 3"):
        parse_responses_text("\n".join(lines[:2] + ["s2,t2,sitting,abc,9,9,b.jsonl"]))
    with pytest.raises(SchemaError, match="row 2"):
        parse_responses_text("\n".join(lines[:1] + ["s2,t2,sitting,1.5,9,9,b.jsonl"]))
    with pytest.raises(SchemaError, match="header"):
        parse_responses_text("a,b,c\n")


def test_params_doc_roundtrip():
    doc = params_doc({m: default_params(m) for m in ("distance", "linh", "paramh", "bodygen")})
    back = parse_params_doc(json.loads(dump_json(doc)))
    assert back["bodygen"] == default_params("bodygen")
    assert parse_params_doc({"linh": {"beta1": 3.0, "h1": 5}})["linh"] == LinHParams(3.0, 5)
    with pytest.raises(SchemaError):
        parse_params_doc({"linh": {"beta9": 1.0}})
    with pytest.raises(SchemaError):
        parse_params_doc({"oracle": {}})


def test_fit_config_roundtrip():
    cfg, mode = fit_config_from_dict(json.loads(dump_json(fit_config_to_dict(FitConfig(), "ground_truth"))))
    assert cfg == FitConfig() and mode == "ground_truth"
    with pytest.raises(SchemaError):
        fit_config_from_dict({"mode": "telepathy"})


def test_default_config_parses():
    d = default_config()
    assert d["spec_version"] == "1.0"
    cfg = parse_config(json.loads(dump_json(d)))
    assert cfg["models"]["bodygen"] == default_params("bodygen")
    assert cfg["mode"] == "responses"
    with pytest.raises(SchemaError, match="spec_version"):
        parse_config({**d, "spec_version": "9"})
    with pytest.raises(SchemaError):
        parse_config({k: v for k, v in d.items() if k != "spec_version"})
    with pytest.raises(SchemaError):
        parse_config({**d, "extra": 1})


def test_planner_section_reaches_bodygen():
    d = default_config()
    d["planner"]["samples_K"] = 16
    del d["models"]["bodygen"]
    assert parse_config(d)["models"]["bodygen"].planner.samples_K == 16
