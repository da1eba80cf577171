"""Stopping-point evaluation of the models on stored trials, and the tables
and figures built from it."""

from __future__ import annotations

import csv
import io
import math
import zlib
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence
from xml.sax.saxutils import escape

import numpy as np

from .core import ObstacleSpec, Prior, ReachInferenceError, SceneSpec, SchemaError, TargetSpec, Trajectory
from .fitting import LOG_FLOOR, Trial, TrialStore, sort_key, prefix_length, resolve
from .kinematics import BodyProportions, KinematicState, neutral_state
from .models.inference import infer
from .models.params import check_model, default_params
from .planner import derive_seed

STANDING_FRACTIONS = (0.20, 0.35, 0.50, 0.65, 0.80)
LATE_FRACTIONS = (0.35, 0.45, 0.55, 0.65, 0.75)
SITTING_SHIFT = 0.10

GRID_ROWS, GRID_COLS = 3, 6
GRID_SPACING = 0.25
GRID_ORIGIN = (-0.625, 0.12, 0.83)
TABLE_HEIGHT = 0.75
TABLE_BOUNDS = ((-0.8, 0.0, 0.71), (0.8, 0.8, 0.75))


def target_layout_grid(n_rows: int = GRID_ROWS, n_cols: int = GRID_COLS,
                       spacing: float = GRID_SPACING, origin=GRID_ORIGIN) -> list[TargetSpec]:
    """Row-major grid of targets with ids 1..n_rows*n_cols; rows step away
    from the actor along +y."""
    if not spacing > 0:
        raise ValueError("spacing must be > 0")
    o = np.asarray(origin, dtype=float)
    return [TargetSpec(r * n_cols + c + 1, o + (c * spacing, r * spacing, 0.0))
            for r in range(n_rows) for c in range(n_cols)]


def grid_cell(target_id: int, n_cols: int = GRID_COLS) -> tuple[int, int]:
    return (target_id - 1) // n_cols, (target_id - 1) % n_cols


def grid_adjacent(a: int, b: int, n_cols: int = GRID_COLS) -> bool:
    """8-neighbourhood adjacency of two grid ids (a cell is not adjacent to itself)."""
    ra, ca = grid_cell(a, n_cols)
    rb, cb = grid_cell(b, n_cols)
    return a != b and abs(ra - rb) <= 1 and abs(ca - cb) <= 1


def standing_scene() -> SceneSpec:
    return SceneSpec(tuple(target_layout_grid()), (), TABLE_HEIGHT, TABLE_BOUNDS,
                     (0.0, -0.25, 0.0), BodyProportions(), "standing")


OBSTACLE_WALL = ObstacleSpec((0.0, 0.245, 0.85), (0.45, 0.01, 0.10))


def obstacle_scene() -> SceneSpec:
    """Standing layout with a thin upright wall between the first and second
    rows, spanning the four middle columns."""
    return standing_scene().replace(obstacles=(OBSTACLE_WALL,), condition_tag="obstacle")


def sitting_scene() -> SceneSpec:
    """Seated actor beside the right end of the table; the platform moves to
    reach the left side."""
    body = BodyProportions(hip_height=0.55)
    return SceneSpec(tuple(target_layout_grid()), (), TABLE_HEIGHT, TABLE_BOUNDS,
                     (0.55, -0.15, 0.0), body, "sitting")


SCENES = {"standing": standing_scene, "sitting": sitting_scene, "obstacle": obstacle_scene}

# seated hands rest raised in front of the chest; hanging they would start under the table
SEATED_REST = KinematicState(shoulder=(1.3, 0.0, 0.0), elbow=2.4)


def start_state(scene: SceneSpec, hand: str = "right") -> KinematicState:
    """Resting pose the planner starts from in ``scene``'s condition."""
    if scene.condition_tag == "sitting":
        return replace(SEATED_REST, hand=hand)
    return neutral_state(hand)


def over_obstacle_targets(scene: SceneSpec) -> list[int]:
    """Targets whose straight line from the actor crosses an obstacle's footprint."""
    out = []
    for t in scene.targets:
        for o in scene.obstacles:
            lo, hi = o.center - o.half_extents, o.center + o.half_extents
            if lo[0] <= t.position[0] <= hi[0] and t.position[1] > hi[1]:
                out.append(t.id)
                break
    return out


def adjust_targets_to_endpoints(scene: SceneSpec, trajectories: Sequence[Trajectory]
                                ) -> tuple[SceneSpec, list[str]]:
    """Move every target to the mean final wrist position of the
    trajectories aimed at it; drop targets that land off the table.

    Targets without trajectories stay put and are flagged.
    """
    ends: dict[int, list[np.ndarray]] = {}
    for tr in trajectories:
        if tr.true_target is None:
            continue
        hand = tr.active_hand or tr.hands()[0]
        ends.setdefault(tr.true_target, []).append(np.asarray(tr.frames[-1].joints[f"wrist_{hand}"]))
    flags = []
    targets = []
    for t in scene.targets:
        if t.id not in ends:
            flags.append(f"no_trajectory:target={t.id}")
            targets.append(t)
            continue
        p = np.mean(ends[t.id], axis=0)
        if not scene.on_table(p) or p[2] < scene.table_height:
            flags.append(f"removed_off_table:target={t.id}")
            continue
        targets.append(TargetSpec(t.id, p))
    return scene.replace(targets=tuple(targets)), flags


def subsample_distractors(scene: SceneSpec, true_target: int, n_distractors: int,
                          rng_seed: int, n_cols: int = GRID_COLS) -> SceneSpec:
    """Keep the true target plus ``n_distractors`` others, no two of them
    grid-adjacent (8-neighbourhood)."""
    if not 2 <= n_distractors <= 6:
        raise ValueError("n_distractors must lie in 2..6")
    ids = scene.target_ids
    if true_target not in ids:
        raise KeyError(true_target)
    cand = [g for g in ids if g != true_target and not grid_adjacent(g, true_target, n_cols)]
    rng = np.random.default_rng(derive_seed(rng_seed, true_target, n_distractors))
    order = [cand[i] for i in rng.permutation(len(cand))]

    def search(chosen: list[int], start: int) -> list[int] | None:
        if len(chosen) == n_distractors:
            return chosen
        for i in range(start, len(order)):
            g = order[i]
            if all(not grid_adjacent(g, c, n_cols) for c in chosen):
                got = search(chosen + [g], i + 1)
                if got is not None:
                    return got
        return None

    picked = search([], 0)
    if picked is None:
        raise ReachInferenceError(
            f"cannot place n_distractors={n_distractors} non-adjacent distractors around "
            f"target {true_target}")
    keep = {true_target, *picked}
    return scene.replace(targets=tuple(t for t in scene.targets if t.id in keep))


def fractions_for(condition: str, fractions: Sequence[float], sitting_shift: float) -> list[float]:
    if condition == "sitting":
        return [min(1.0, round(f + sitting_shift, 12)) for f in fractions]
    return list(fractions)


@dataclass(frozen=True)
class ExperimentConfig:
    trial_refs: tuple[str, ...]
    stopping_fractions: tuple[float, ...] = STANDING_FRACTIONS
    models: tuple[tuple[str, object], ...] = (("distance", None),)
    seed: int = 0
    sitting_shift: float = SITTING_SHIFT

    def __post_init__(self):
        fr = tuple(float(f) for f in self.stopping_fractions)
        if not fr or any(not 0 < f <= 1 for f in fr):
            raise SchemaError("stopping fractions must lie in (0, 1]", where="stopping_fractions")
        if any(b <= a for a, b in zip(fr, fr[1:])):
            raise SchemaError("stopping fractions must be strictly increasing", where="stopping_fractions")
        object.__setattr__(self, "stopping_fractions", fr)
        models = []
        for m, p in self.models:
            check_model(m)
            models.append((m, p if p is not None else default_params(m)))
        object.__setattr__(self, "models", tuple(models))
        object.__setattr__(self, "trial_refs", tuple(self.trial_refs))


@dataclass(frozen=True)
class TrialOutcome:
    ref: str
    condition: str
    target: int
    stopping_fraction: float
    prefix_len: int
    model: str
    predicted: int
    rank: int
    log_posterior_true: float
    n_targets: int


METRIC_COLUMNS = ("condition", "target", "stopping_fraction", "model", "accuracy",
                  "mean_log_posterior_true", "n")


@dataclass
class MetricsTable:
    rows: list[dict]
    outcomes: list[TrialOutcome] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.rows)

    def to_csv(self) -> str:
        return rows_to_csv(self.rows, METRIC_COLUMNS)

    @classmethod
    def from_csv(cls, text: str) -> "MetricsTable":
        rows = []
        for r in csv.DictReader(io.StringIO(text)):
            rows.append({
                "condition": r["condition"], "target": int(r["target"]),
                "stopping_fraction": float(r["stopping_fraction"]), "model": r["model"],
                "accuracy": float(r["accuracy"]),
                "mean_log_posterior_true": float(r["mean_log_posterior_true"]), "n": int(r["n"]),
            })
        return cls(rows)

    def aggregate(self, by: Sequence[str] = ("condition", "stopping_fraction", "model")) -> list[dict]:
        """Re-aggregate over outcomes (accuracy and mean log posterior)."""
        return _aggregate(self.outcomes, by)


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def rows_to_csv(rows: Sequence[dict], columns: Sequence[str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r[c]) for c in columns])
    return buf.getvalue()


def _aggregate(outcomes: Sequence[TrialOutcome], by: Sequence[str]) -> list[dict]:
    groups: dict[tuple, list[TrialOutcome]] = {}
    for o in outcomes:
        groups.setdefault(tuple(getattr(o, k) for k in by), []).append(o)
    rows = []
    for key in sorted(groups, key=lambda k: tuple(sort_key(x) for x in k)):
        os_ = groups[key]
        rows.append({**dict(zip(by, key)),
                     "accuracy": float(np.mean([o.predicted == o.target for o in os_])),
                     "mean_log_posterior_true": float(np.mean([o.log_posterior_true for o in os_])),
                     "n": len(os_)})
    return rows


def evaluate_trial(ref: str, trial: Trial, fractions: Sequence[float],
                   models: Sequence[tuple[str, object]], seed: int, value=None) -> list[TrialOutcome]:
    traj = trial.trajectory
    if traj.true_target is None:
        raise SchemaError(f"trajectory {ref!r} has no true_target", where=ref)
    scene = trial.scene
    prior = trial.prior or Prior.uniform(scene.target_ids)
    out = []
    for f in fractions:
        n = prefix_length(len(traj), f)
        pre = traj.prefix(n)
        for model_id, params in models:
            post = infer(model_id, pre, scene, params, prior, value,
                         rng_seed=int(derive_seed(seed, _ref_hash(ref)).generate_state(1)[0]))
            p = post.probs[traj.true_target]
            lp = max(math.log(p), LOG_FLOOR) if p > 0 else LOG_FLOOR
            out.append(TrialOutcome(ref, scene.condition_tag, traj.true_target, f, n, model_id,
                                    post.argmax(), post.rank_of(traj.true_target), lp,
                                    len(scene.targets)))
    return out


def _ref_hash(ref: str) -> int:
    return zlib.crc32(ref.encode())


def run_experiment(cfg: ExperimentConfig, store: TrialStore, value=None) -> MetricsTable:
    """Truncate every trial at every stopping fraction, run every model and
    tabulate accuracy and the true target's log posterior per
    (condition, target, fraction, model)."""
    trials = [(ref, resolve(store, ref)) for ref in cfg.trial_refs]
    outcomes: list[TrialOutcome] = []
    for ref, trial in trials:
        fr = fractions_for(trial.scene.condition_tag, cfg.stopping_fractions, cfg.sitting_shift)
        outcomes.extend(evaluate_trial(ref, trial, fr, cfg.models, cfg.seed, value))
    rows = _aggregate(outcomes, ("condition", "target", "stopping_fraction", "model"))
    return MetricsTable(rows, outcomes)


@dataclass
class Comparison:
    differences: list[dict]
    winners: list[dict]


def compare_models(rows: Sequence[dict], unit: str = "subject",
                   split: str | None = "stopping_fraction") -> Comparison:
    """Pairwise per-unit differences in mean log posterior, and per-split
    fractions of units each model fits best (ties shared evenly).

    ``rows`` are tidy per-unit rows as produced by ``per_unit_loglik``.
    """
    models = sorted({r["model"] for r in rows})
    if len(models) < 2:
        raise ReachInferenceError("compare_models needs at least two models")
    table: dict[tuple, dict[str, float]] = {}
    for r in rows:
        key = (r[split] if split else None, r[unit])
        table.setdefault(key, {})[r["model"]] = r["mean_log_posterior"]
    for key, vals in table.items():
        if set(vals) != set(models):
            raise ReachInferenceError(f"models were not evaluated on the same units (unit {key})")
    diffs, tallies = [], {}
    for key in sorted(table, key=lambda k: (str(k[0]), str(k[1]))):
        vals = table[key]
        for i, a in enumerate(models):
            for b in models[i + 1:]:
                diffs.append({"split": key[0], "unit": key[1], "model_a": a, "model_b": b,
                              "difference": vals[a] - vals[b]})
        best = max(vals.values())
        tops = [m for m in models if vals[m] == best]
        t = tallies.setdefault(key[0], {m: 0.0 for m in models} | {"_n": 0})
        for m in tops:
            t[m] += 1.0 / len(tops)
        t["_n"] += 1
    winners = []
    for s in sorted(tallies, key=str):
        t = tallies[s]
        for m in models:
            winners.append({"split": s, "model": m, "fraction": t[m] / t["_n"], "n_units": t["_n"]})
    return Comparison(diffs, winners)


def bootstrap_ci(values: Sequence[float], n_resamples: int = 1000, level: float = 0.95,
                 rng_seed: int = 0) -> tuple[float, float]:
    """Percentile bootstrap interval of the mean."""
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise ValueError("no values")
    rng = np.random.default_rng(derive_seed(rng_seed, 31337))
    means = v[rng.integers(0, v.size, (n_resamples, v.size))].mean(axis=1)
    lo = (1 - level) / 2
    return float(np.quantile(means, lo)), float(np.quantile(means, 1 - lo))


# -- report emission -------------------------------------------------------

_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _svg_accuracy(rows: Sequence[dict]) -> str:
    """One panel per condition: accuracy against stopping fraction, one
    line per model."""
    agg: dict[tuple, list[tuple[float, int]]] = {}
    for r in rows:
        agg.setdefault((r["condition"], r["model"], r["stopping_fraction"]), []).append((r["accuracy"], r["n"]))
    conds = sorted({k[0] for k in agg})
    models = sorted({k[1] for k in agg})
    W, H, pad = 260, 200, 40
    width = pad + len(conds) * (W + pad)
    height = H + 2 * pad + 20 * len(models)
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}">']
    for ci, cond in enumerate(conds):
        x0, y0 = pad + ci * (W + pad), pad
        out.append(f'<g id="panel-{escape(cond)}">')
        out.append(f'<rect x="{x0}" y="{y0}" width="{W}" height="{H}" fill="none" stroke="#000"/>')
        out.append(f'<text x="{x0 + W / 2:.1f}" y="{y0 - 10}" text-anchor="middle" '
                   f'font-size="12">{escape(cond)}</text>')
        for mi, m in enumerate(models):
            pts = sorted((k[2], sum(a * n for a, n in v) / sum(n for _, n in v))
                         for k, v in agg.items() if k[0] == cond and k[1] == m)
            if not pts:
                continue
            coords = " ".join(f"{x0 + f * W:.2f},{y0 + H - a * H:.2f}" for f, a in pts)
            col = _COLORS[mi % len(_COLORS)]
            out.append(f'<polyline points="{coords}" fill="none" stroke="{col}" stroke-width="2"/>')
            for f, a in pts:
                out.append(f'<circle cx="{x0 + f * W:.2f}" cy="{y0 + H - a * H:.2f}" r="3" fill="{col}"/>')
        out.append("</g>")
    for mi, m in enumerate(models):
        y = H + 2 * pad + 20 * mi
        out.append(f'<text x="{pad}" y="{y}" font-size="12" fill="{_COLORS[mi % len(_COLORS)]}">'
                   f'{escape(m)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _svg_scatter(comparison: Comparison) -> str:
    """Per-unit difference dots, one column per split value."""
    splits = sorted({d["split"] for d in comparison.differences}, key=str)
    vals = [d["difference"] for d in comparison.differences]
    span = max(1e-9, max(abs(v) for v in vals)) if vals else 1.0
    W, H, pad = 60, 240, 40
    width = pad * 2 + W * max(1, len(splits))
    height = H + 2 * pad
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}">',
           f'<line x1="{pad}" y1="{pad + H / 2}" x2="{width - pad}" y2="{pad + H / 2}" stroke="#888"/>']
    for si, s in enumerate(splits):
        cx = pad + W * si + W / 2
        out.append(f'<text x="{cx:.1f}" y="{height - 10}" text-anchor="middle" font-size="11">{escape(str(s))}</text>')
        for j, d in enumerate(x for x in comparison.differences if x["split"] == s):
            y = pad + H / 2 - d["difference"] / span * (H / 2)
            dx = ((j % 7) - 3) * 4
            out.append(f'<circle cx="{cx + dx:.2f}" cy="{y:.2f}" r="3" fill="#1f77b4" fill-opacity="0.6"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_report(table: MetricsTable, out_dir, formats: Iterable[str] = ("csv", "svg"),
                comparison: Comparison | None = None, name: str = "metrics") -> list[Path]:
    """Write ``<name>.csv`` and/or ``<name>.svg`` (plus ``<name>_compare.svg``
    when a comparison is given). Output bytes depend only on the inputs."""
    if not table.rows:
        raise ReachInferenceError("cannot emit an empty table")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for fmt in formats:
        if fmt == "csv":
            p = out / f"{name}.csv"
            p.write_text(table.to_csv())
        elif fmt == "svg":
            p = out / f"{name}.svg"
            p.write_text(_svg_accuracy(table.rows))
            if comparison is not None:
                q = out / f"{name}_compare.svg"
                q.write_text(_svg_scatter(comparison))
                written.append(q)
        else:
            raise SchemaError(f"unknown report format {fmt!r}", where="format")
        written.append(p)
    return sorted(written)
