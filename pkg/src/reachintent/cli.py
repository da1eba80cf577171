"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from dataclasses import fields, replace
from pathlib import Path

from .core import NumericError, Prior, ReachInferenceError, SchemaError
from .fitting import Trial, fit_model, prefix_length
from .harness import SCENES, ExperimentConfig, emit_report, run_experiment, start_state
from .io import (
    default_config,
    dump_json,
    params_doc,
    parse_config,
    parse_params_doc,
    parse_responses,
    parse_scene,
    parse_trajectory_with_header,
    read_json,
    scene_to_dict,
    write_scene,
    write_trajectory,
)
from .models.inference import infer
from .models.params import MODEL_IDS, default_params
from .planner import derive_seed, synthesize_trajectory
from .synthetic import trial_ref

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _load_config(path):
    return parse_config(read_json(path) if path else default_config(), where=str(path or "defaults"))


def _scene_arg(value: str):
    if value in SCENES:
        return SCENES[value]()
    return parse_scene(value)


def _value(path):
    if not path:
        return None
    from .value import ValueEnsemble

    return ValueEnsemble.load(path)


def _parse_fractions(text: str) -> list[float]:
    try:
        fr = [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"cannot parse fractions {text!r}") from None
    if not fr or any(not 0 < f <= 1 for f in fr):
        raise UsageError("fractions must lie in (0, 1]")
    return fr


def cmd_simulate(args) -> int:
    cfg = _load_config(args.config)
    scene = _scene_arg(args.scene) if args.scene else cfg["scene"]
    if args.targets == "all":
        targets = list(scene.target_ids)
    else:
        try:
            targets = [int(x) for x in args.targets.split(",") if x.strip()]
        except ValueError:
            raise UsageError(f"cannot parse targets {args.targets!r}") from None
        missing = [g for g in targets if g not in scene.target_ids]
        if missing:
            raise SchemaError(f"targets {missing} not in scene", where="targets")
    if args.n_per_target < 0:
        raise UsageError("--n-per-target must be >= 0")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_scene(scene, out / "scene.json")
    value = _value(args.value)
    entries, ok = [], 0
    for g in targets:
        for r in range(args.n_per_target):
            name = trial_ref(scene.condition_tag, g, r) + ".jsonl"
            seed = int(derive_seed(args.seed, g, r).generate_state(1)[0])
            try:
                traj = synthesize_trajectory(scene.target(g), scene, start_state(scene, args.hand), cfg["planner"],
                                             seed, value, actor_id=f"planner-{r}")
            except NumericError as e:
                entries.append({"file": None, "target": g, "repetition": r, "seed": seed, "error": str(e)})
                continue
            write_trajectory(traj, out / name, scene_ref="scene.json")
            entries.append({"file": name, "target": g, "repetition": r, "seed": seed,
                            "n_frames": len(traj)})
            ok += 1
    (out / "manifest.json").write_text(dump_json({"seed": args.seed, "scene": "scene.json", "trials": entries}))
    print(f"wrote {ok} trajectories to {out}")
    if entries and ok == 0:
        return EXIT_NUMERIC
    return EXIT_OK


def _trial_from_file(path, scene_override=None) -> Trial:
    traj, header = parse_trajectory_with_header(path)
    if scene_override is not None:
        return Trial(traj, scene_override)
    ref = header.get("scene_ref")
    if not ref:
        raise SchemaError(f"{path}: no scene given and no scene_ref in header", where=str(path))
    return Trial(traj, parse_scene(Path(path).parent / ref))


def _model_params(model: str, params_file, cfg):
    if params_file:
        doc = read_json(params_file)
        if "params" in doc and "model" in doc:  # a fit result
            doc = {doc["model"]: doc["params"]}
        parsed = parse_params_doc(doc, where=str(params_file))
        if model not in parsed:
            raise SchemaError(f"{params_file} has no parameters for {model}", where=str(params_file))
        return parsed[model]
    return cfg["models"][model]


def cmd_infer(args) -> int:
    cfg = _load_config(args.config)
    scene = _scene_arg(args.scene) if args.scene else None
    trial = _trial_from_file(args.trajectory, scene)
    params = _model_params(args.model, args.params, cfg)
    traj = trial.trajectory
    n = len(traj)
    if args.fractions:
        points = [(f, prefix_length(n, f)) for f in _parse_fractions(args.fractions)]
    else:
        points = [(tau / n, tau) for tau in range(2, n + 1)]
    prior = Prior.uniform(trial.scene.target_ids)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["fraction", "tau", "target_id", "probability"])
    value = _value(args.value)
    for f, tau in points:
        post = infer(args.model, traj.prefix(tau), trial.scene, params, prior, value, args.seed)
        for g in trial.scene.target_ids:
            w.writerow([repr(float(f)), tau, g, repr(float(post.probs[g]))])
    _write_out(args.out, buf.getvalue())
    return EXIT_OK


def _write_out(out, text: str):
    if out in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text)


class _DirStore(dict):
    """Trial store backed by trajectory files under a directory."""

    def __init__(self, root: Path):
        super().__init__()
        self.root = root

    def __missing__(self, ref):
        path = self.root / ref
        if not path.exists():
            raise KeyError(ref)
        trial = _trial_from_file(path)
        self[ref] = trial
        return trial


def cmd_fit(args) -> int:
    cfg = _load_config(args.config)
    records = parse_responses(args.responses)
    store = _DirStore(Path(args.data_dir))
    for i, r in enumerate(records, start=2):
        if not (store.root / r.trajectory_ref).exists():
            raise SchemaError(f"row {i}: trajectory_ref {r.trajectory_ref!r} not found under {store.root}",
                              where=f"{args.responses}:{i}")
    mode = args.mode or cfg["mode"]
    init = cfg["models"][args.model]
    fitting = replace(cfg["fitting"], init={f.name: getattr(init, f.name) for f in fields(init)})
    res = fit_model(args.model, records, mode, fitting, store, _value(args.value))
    _write_out(args.out, dump_json(res.to_dict(fitting)))
    return EXIT_OK


def cmd_evaluate(args) -> int:
    cfg_path = Path(args.config)
    cfg = _load_config(cfg_path)
    exp = cfg["experiment"]
    base = cfg_path.parent
    store, refs = {}, []
    default_scene = cfg["scene"]
    for i, t in enumerate(exp.get("trials", [])):
        tpath = base / t["trajectory"]
        if not tpath.exists():
            raise FileNotFoundError(f"no such file: {tpath}")
        scene = parse_scene(base / t["scene"]) if "scene" in t else None
        traj, header = parse_trajectory_with_header(tpath)
        if scene is None and header.get("scene_ref"):
            scene = parse_scene(tpath.parent / header["scene_ref"])
        scene = scene or default_scene
        ref = t["trajectory"]
        store[ref] = Trial(traj, scene)
        refs.append(ref)
    if not refs:
        raise SchemaError("experiment.trials is empty", where="experiment.trials")
    models = tuple((m, cfg["models"][m]) for m in exp.get("models", MODEL_IDS))
    ecfg = ExperimentConfig(tuple(refs), tuple(exp.get("stopping_fractions", (0.2, 0.35, 0.5, 0.65, 0.8))),
                            models, args.seed, float(exp.get("sitting_shift", 0.10)))
    value_file = exp.get("value_file")
    value = _value(base / value_file) if value_file else None
    table = run_experiment(ecfg, store, value)
    paths = emit_report(table, args.out, exp.get("formats", ["csv", "svg"]))
    print("\n".join(str(p) for p in paths))
    return EXIT_OK


def cmd_config(args) -> int:
    _write_out(args.out, dump_json(default_config()))
    return EXIT_OK


def cmd_scene(args) -> int:
    scene = SCENES[args.condition]()
    _write_out(args.out, dump_json(scene_to_dict(scene)))
    return EXIT_OK


def cmd_params(args) -> int:
    _write_out(args.out, dump_json(params_doc({m: default_params(m) for m in MODEL_IDS})))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="reachintent", description="Goal inference for 3D reaching.")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    s = sub.add_parser("simulate", help="synthesize planner trajectories")
    s.add_argument("--scene", help="scene JSON file or one of: " + ", ".join(SCENES))
    s.add_argument("--targets", default="all", help="'all' or comma-separated ids")
    s.add_argument("--n-per-target", type=int, default=1)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--hand", choices=("left", "right"), default="right")
    s.add_argument("--config")
    s.add_argument("--value", help="value-ensemble weight file")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("infer", help="posterior time series for one trajectory")
    s.add_argument("--trajectory", required=True)
    s.add_argument("--scene", help="scene file or name; default: the trajectory's scene_ref")
    s.add_argument("--model", choices=MODEL_IDS, required=True)
    s.add_argument("--params", help="params JSON keyed by model id, or a fit result")
    s.add_argument("--fractions", help="comma-separated stopping fractions; default every frame")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", default="-")
    s.add_argument("--config")
    s.add_argument("--value")
    s.set_defaults(func=cmd_infer)

    s = sub.add_parser("fit", help="maximum-likelihood fit to responses")
    s.add_argument("--model", choices=MODEL_IDS, required=True)
    s.add_argument("--responses", required=True)
    s.add_argument("--data-dir", required=True)
    s.add_argument("--mode", choices=("responses", "ground_truth"))
    s.add_argument("--out", default="-")
    s.add_argument("--config")
    s.add_argument("--value")
    s.set_defaults(func=cmd_fit)

    s = sub.add_parser("evaluate", help="stopping-point evaluation from a config")
    s.add_argument("--config", required=True)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("config", help="print the default configuration")
    s.add_argument("--out", default="-")
    s.set_defaults(func=cmd_config)

    s = sub.add_parser("scene", help="write a built-in scene")
    s.add_argument("--condition", choices=sorted(SCENES), required=True)
    s.add_argument("--out", default="-")
    s.set_defaults(func=cmd_scene)

    s = sub.add_parser("params", help="print default model parameters")
    s.add_argument("--out", default="-")
    s.set_defaults(func=cmd_params)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (SchemaError, FileNotFoundError, ReachInferenceError, KeyError, json.JSONDecodeError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except (NumericError, FloatingPointError) as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
