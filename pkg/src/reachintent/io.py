"""Plain-text file formats: scene JSON, trajectory JSONL, response CSV,
model-parameter JSON and the run configuration."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, fields
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from .core import ObstacleSpec, SceneSpec, SchemaError, SkeletonFrame, TargetSpec, Trajectory
from .fitting import FitConfig, ResponseRecord
from .kinematics import BodyProportions
from .models.params import MODEL_IDS, default_params, params_from_dict, params_to_dict
from .optim import AdamConfig, NelderMeadConfig
from .planner import PlannerParams

CONFIG_VERSION = "1.0"
RESPONSE_COLUMNS = ("subject_id", "trial_id", "condition", "stopping_fraction",
                    "chosen_target", "true_target", "trajectory_ref")


def _check_keys(d: Mapping, allowed, where: str, required=()):
    if not isinstance(d, Mapping):
        raise SchemaError(f"expected an object at {where}", where=where)
    unknown = set(d) - set(allowed)
    if unknown:
        raise SchemaError(f"unknown keys {sorted(unknown)} at {where}", where=where)
    missing = set(required) - set(d)
    if missing:
        raise SchemaError(f"missing keys {sorted(missing)} at {where}", where=where)


def _vec(v, where: str) -> np.ndarray:
    try:
        a = np.asarray(v, dtype=float)
    except (TypeError, ValueError):
        raise SchemaError(f"expected 3 numbers at {where}", where=where) from None
    if a.shape != (3,) or not np.all(np.isfinite(a)):
        raise SchemaError(f"expected 3 finite numbers at {where}", where=where)
    return a


def _num(x) -> Any:
    if isinstance(x, np.ndarray):
        return [float(v) for v in x]
    if isinstance(x, (np.floating, float)):
        return float(x)
    return x


# -- scenes ----------------------------------------------------------------

def body_to_dict(body: BodyProportions) -> dict:
    d = asdict(body)
    d["joint_limits"] = {k: list(v) for k, v in body.joint_limits.items()}
    return d


def body_from_dict(d: Mapping, where: str = "body") -> BodyProportions:
    _check_keys(d, [f.name for f in fields(BodyProportions)], where)
    d = dict(d)
    if "joint_limits" in d:
        d["joint_limits"] = {k: tuple(v) for k, v in d["joint_limits"].items()}
    try:
        return BodyProportions(**d)
    except SchemaError as e:
        raise SchemaError(str(e), where=f"{where}.{e.where}" if e.where else where) from None


def scene_to_dict(scene: SceneSpec) -> dict:
    return {
        "targets": [{"id": t.id, "position": _num(t.position)} for t in scene.targets],
        "obstacles": [{"kind": o.kind, "center": _num(o.center), "half_extents": _num(o.half_extents)}
                      for o in scene.obstacles],
        "table_height": scene.table_height,
        "table_bounds": {"min": _num(scene.table_bounds[0]), "max": _num(scene.table_bounds[1])},
        "actor_base": _num(scene.actor_base),
        "body": body_to_dict(scene.body),
        "condition_tag": scene.condition_tag,
    }


def scene_from_dict(d: Mapping, where: str = "scene") -> SceneSpec:
    _check_keys(d, ("targets", "obstacles", "table_height", "table_bounds", "actor_base", "body",
                    "condition_tag"), where, required=("targets", "table_height", "table_bounds", "actor_base"))
    targets = []
    for i, t in enumerate(d["targets"]):
        w = f"{where}.targets[{i}]"
        _check_keys(t, ("id", "position"), w, required=("id", "position"))
        if not isinstance(t["id"], int) or isinstance(t["id"], bool):
            raise SchemaError(f"target id must be an integer at {w}.id", where=f"{w}.id")
        targets.append(TargetSpec(t["id"], _vec(t["position"], f"{w}.position")))
    obstacles = []
    for i, o in enumerate(d.get("obstacles", [])):
        w = f"{where}.obstacles[{i}]"
        _check_keys(o, ("kind", "center", "half_extents"), w, required=("center", "half_extents"))
        obstacles.append(ObstacleSpec(_vec(o["center"], f"{w}.center"),
                                      _vec(o["half_extents"], f"{w}.half_extents"), o.get("kind", "box")))
    tb = d["table_bounds"]
    _check_keys(tb, ("min", "max"), f"{where}.table_bounds", required=("min", "max"))
    body = body_from_dict(d["body"], f"{where}.body") if "body" in d else BodyProportions()
    try:
        return SceneSpec(tuple(targets), tuple(obstacles), float(d["table_height"]),
                         (_vec(tb["min"], f"{where}.table_bounds.min"), _vec(tb["max"], f"{where}.table_bounds.max")),
                         _vec(d["actor_base"], f"{where}.actor_base"), body, d.get("condition_tag", "custom"))
    except SchemaError as e:
        raise SchemaError(f"{where}: {e}", where=where) from None


def dump_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def write_scene(scene: SceneSpec, path) -> None:
    Path(path).write_text(dump_json(scene_to_dict(scene)))


def read_json(path) -> Any:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"no such file: {p}")
    try:
        return json.loads(p.read_text())
    except json.JSONDecodeError as e:
        raise SchemaError(f"{p}: invalid JSON at line {e.lineno}: {e.msg}", where=f"{p}:{e.lineno}") from None


def parse_scene(path) -> SceneSpec:
    return scene_from_dict(read_json(path), where=str(path))


# -- trajectories ----------------------------------------------------------

HEADER_KEYS = ("actor_id", "true_target", "active_hand", "scene_ref")


def trajectory_to_jsonl(traj: Trajectory, scene_ref: str | None = None) -> str:
    header = {"actor_id": traj.actor_id, "true_target": traj.true_target, "active_hand": traj.active_hand}
    if scene_ref is not None:
        header["scene_ref"] = scene_ref
    lines = [json.dumps(header, sort_keys=True)]
    for f in traj.frames:
        joints = {k: _num(np.asarray(v)) for k, v in sorted(f.joints.items())}
        lines.append(json.dumps({"t": float(f.t), "joints": joints}, sort_keys=True))
    return "\n".join(lines) + "\n"


def write_trajectory(traj: Trajectory, path, scene_ref: str | None = None) -> None:
    Path(path).write_text(trajectory_to_jsonl(traj, scene_ref))


def parse_trajectory_text(text: str, name: str = "<trajectory>") -> tuple[Trajectory, dict]:
    """Parse JSONL; returns the trajectory and its header."""
    lines = [(i + 1, ln) for i, ln in enumerate(text.splitlines()) if ln.strip()]
    if not lines:
        raise SchemaError(f"{name}: empty trajectory file", where=f"{name}:1")
    def load(lineno, ln):
        try:
            return json.loads(ln)
        except json.JSONDecodeError as e:
            raise SchemaError(f"{name}:{lineno}: invalid JSON ({e.msg})", where=f"{name}:{lineno}") from None
    lineno, first = lines[0]
    header = load(lineno, first)
    if not isinstance(header, dict) or "joints" in header:
        raise SchemaError(f"{name}:{lineno}: first line must be the header object", where=f"{name}:{lineno}")
    _check_keys(header, HEADER_KEYS, f"{name}:{lineno}", required=("actor_id",))
    frames = []
    for lineno, ln in lines[1:]:
        obj = load(lineno, ln)
        w = f"{name}:{lineno}"
        _check_keys(obj, ("t", "joints"), w, required=("t", "joints"))
        if not isinstance(obj["joints"], dict):
            raise SchemaError(f"{w}: joints must be an object", where=w)
        try:
            joints = {k: _vec(v, f"{w}.joints.{k}") for k, v in obj["joints"].items()}
            frames.append(SkeletonFrame(float(obj["t"]), joints))
        except (SchemaError, ValueError, TypeError) as e:
            raise SchemaError(f"{w}: {e}", where=w) from None
    if len(frames) < 2:
        raise SchemaError(f"{name}: a trajectory needs at least 2 frames, found {len(frames)}", where=name)
    try:
        traj = Trajectory(tuple(frames), str(header["actor_id"]), header.get("true_target"),
                          header.get("active_hand"))
    except (SchemaError, ValueError) as e:
        raise SchemaError(f"{name}: {e}", where=name) from None
    return traj, header


def parse_trajectory(path) -> Trajectory:
    return parse_trajectory_with_header(path)[0]


def parse_trajectory_with_header(path) -> tuple[Trajectory, dict]:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"no such file: {p}")
    return parse_trajectory_text(p.read_text(), str(p))


# -- responses -------------------------------------------------------------

def responses_to_csv(records) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RESPONSE_COLUMNS)
    for r in records:
        w.writerow([r.subject_id, r.trial_id, r.condition_tag, repr(float(r.stopping_fraction)),
                    r.chosen_target, r.true_target, r.trajectory_ref])
    return buf.getvalue()


def parse_responses_text(text: str, name: str = "<responses>") -> list[ResponseRecord]:
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise SchemaError(f"{name}: empty responses file", where=f"{name}:1") from None
    if tuple(h.strip() for h in header) != RESPONSE_COLUMNS:
        raise SchemaError(f"{name}: header must be {','.join(RESPONSE_COLUMNS)}", where=f"{name}:1")
    out = []
    for i, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        w = f"{name}:{i}"
        if len(row) != len(RESPONSE_COLUMNS):
            raise SchemaError(f"row {i}: expected {len(RESPONSE_COLUMNS)} fields, got {len(row)}", where=w)
        try:
            out.append(ResponseRecord(row[0], row[1], row[2], float(row[3]), int(row[4]), int(row[5]), row[6]))
        except (ValueError, SchemaError) as e:
            raise SchemaError(f"row {i}: {e}", where=w) from None
    return out


def parse_responses(path) -> list[ResponseRecord]:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"no such file: {p}")
    return parse_responses_text(p.read_text(), str(p))


# -- parameters and configuration ------------------------------------------

def params_doc(params_by_model: Mapping[str, object]) -> dict:
    return {m: params_to_dict(p) for m, p in params_by_model.items()}


def parse_params_doc(d: Mapping, where: str = "models") -> dict[str, object]:
    _check_keys(d, MODEL_IDS, where)
    return {m: params_from_dict(m, v) for m, v in d.items()}


def fit_config_to_dict(cfg: FitConfig, mode: str = "responses") -> dict:
    return {
        "mode": mode,
        "nelder_mead": {k: _num(v) if not isinstance(v, tuple) else list(v)
                        for k, v in asdict(cfg.nelder_mead).items()},
        "adam": asdict(cfg.adam),
        "window_bounds": {k: list(v) for k, v in sorted(cfg.window_bounds.items())},
        "fit_windows": cfg.fit_windows,
        "integer_polish": cfg.integer_polish,
    }


def fit_config_from_dict(d: Mapping, where: str = "fitting") -> tuple[FitConfig, str]:
    _check_keys(d, ("mode", "nelder_mead", "adam", "window_bounds", "fit_windows", "integer_polish"), where)
    base = FitConfig()
    kw = {}
    if "nelder_mead" in d:
        _check_keys(d["nelder_mead"], [f.name for f in fields(NelderMeadConfig)], f"{where}.nelder_mead")
        nm = dict(d["nelder_mead"])
        if isinstance(nm.get("initial_step"), list):
            nm["initial_step"] = tuple(nm["initial_step"])
        kw["nelder_mead"] = NelderMeadConfig(**{**asdict(base.nelder_mead), **nm})
    if "adam" in d:
        _check_keys(d["adam"], [f.name for f in fields(AdamConfig)], f"{where}.adam")
        kw["adam"] = AdamConfig(**{**asdict(base.adam), **d["adam"]})
    if "window_bounds" in d:
        _check_keys(d["window_bounds"], base.window_bounds.keys(), f"{where}.window_bounds")
        kw["window_bounds"] = {**base.window_bounds, **{k: tuple(v) for k, v in d["window_bounds"].items()}}
    for k in ("fit_windows", "integer_polish"):
        if k in d:
            kw[k] = bool(d[k])
    mode = d.get("mode", "responses")
    if mode not in ("responses", "ground_truth"):
        raise SchemaError(f"{where}.mode must be responses or ground_truth", where=f"{where}.mode")
    return FitConfig(**{**{f.name: getattr(base, f.name) for f in fields(FitConfig)}, **kw}), mode


EXPERIMENT_KEYS = ("trials", "stopping_fractions", "models", "sitting_shift", "formats", "value_file")


def default_config() -> dict:
    """Every tunable with its default value."""
    from .harness import SITTING_SHIFT, STANDING_FRACTIONS, standing_scene

    planner = asdict(PlannerParams())
    return {
        "spec_version": CONFIG_VERSION,
        "scene": scene_to_dict(standing_scene()),
        "planner": planner,
        "models": params_doc({m: default_params(m) for m in MODEL_IDS}),
        "fitting": fit_config_to_dict(FitConfig()),
        "experiment": {
            "trials": [],
            "stopping_fractions": list(STANDING_FRACTIONS),
            "models": list(MODEL_IDS),
            "sitting_shift": SITTING_SHIFT,
            "formats": ["csv", "svg"],
            "value_file": None,
        },
    }


def parse_config(d: Mapping, where: str = "config") -> dict:
    """Validate a configuration document and fill defaults.

    Returns a dict with parsed objects: ``scene`` (SceneSpec or None),
    ``planner`` (PlannerParams), ``models`` (model id -> params, planner
    section folded into bodygen unless it sets its own), ``fitting``
    (FitConfig), ``mode`` and ``experiment`` (raw, validated dict).
    """
    _check_keys(d, ("spec_version", "scene", "planner", "models", "fitting", "experiment"), where,
                required=("spec_version",))
    if str(d["spec_version"]) != CONFIG_VERSION:
        raise SchemaError(f"unsupported spec_version {d['spec_version']!r}; expected {CONFIG_VERSION}",
                          where=f"{where}.spec_version")
    from .models.params import planner_from_dict

    planner = planner_from_dict(d.get("planner", {}))
    models = {m: default_params(m) for m in MODEL_IDS}
    raw_models = d.get("models", {})
    _check_keys(raw_models, MODEL_IDS, f"{where}.models")
    for m, v in raw_models.items():
        v = dict(v)
        if m == "bodygen" and "planner" not in v:
            v["planner"] = asdict(planner)
        models[m] = params_from_dict(m, v)
    if "bodygen" not in raw_models:
        from dataclasses import replace

        models["bodygen"] = replace(models["bodygen"], planner=planner)
    fitting, mode = fit_config_from_dict(d.get("fitting", {}), f"{where}.fitting")
    exp = dict(d.get("experiment", {}))
    _check_keys(exp, EXPERIMENT_KEYS, f"{where}.experiment")
    for i, t in enumerate(exp.get("trials", [])):
        _check_keys(t, ("trajectory", "scene"), f"{where}.experiment.trials[{i}]", required=("trajectory",))
    for m in exp.get("models", []):
        if m not in MODEL_IDS:
            raise SchemaError(f"unknown model {m!r} in experiment.models", where=f"{where}.experiment.models")
    scene = scene_from_dict(d["scene"], f"{where}.scene") if d.get("scene") is not None else None
    return {"scene": scene, "planner": planner, "models": models, "fitting": fitting, "mode": mode,
            "experiment": exp}
