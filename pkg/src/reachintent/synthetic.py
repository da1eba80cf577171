"""Planner-synthesized trials and simulated observer responses."""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from .core import ReachInferenceError, SceneSpec
from .fitting import ResponseRecord, Trial, TrialStore, prefix_length, record_seed, resolve
from .harness import fractions_for, over_obstacle_targets, start_state, subsample_distractors
from .kinematics import KinematicState
from .models.inference import model_features
from .models.params import rate
from .planner import PlannerParams, derive_seed, synthesize_trajectory


def trial_ref(condition: str, target: int, rep: int) -> str:
    return f"{condition}-t{target:02d}-r{rep:02d}"


def synthesize_trials(scene: SceneSpec, targets: Sequence[int] | None = None, n_per_target: int = 1,
                      seed: int = 0, params: PlannerParams | None = None,
                      start: KinematicState | None = None, value=None) -> dict[str, Trial]:
    """One planner reach per (target, repetition), keyed by ``trial_ref``.

    Repetition ``r`` toward target ``g`` plans with a seed derived from
    ``(seed, g, r)``. Plans that fail to reach raise ``NumericError``.
    """
    targets = list(scene.target_ids if targets is None else targets)
    start = start or start_state(scene)
    out = {}
    for g in targets:
        for r in range(n_per_target):
            s = int(derive_seed(seed, g, r).generate_state(1)[0])
            traj = synthesize_trajectory(scene.target(g), scene, start, params, s, value,
                                         actor_id=f"planner-{r}")
            out[trial_ref(scene.condition_tag, g, r)] = Trial(traj, scene)
    return out


def distractor_trials(scene: SceneSpec, n_trials: int, seed: int = 0,
                      targets: Sequence[int] | None = None, params: PlannerParams | None = None,
                      value=None, max_distractors: int = 4) -> dict[str, Trial]:
    """Reaches to ``targets`` (default: those behind an obstacle, else all),
    each shown among 2 to ``max_distractors`` sampled non-adjacent distractors.

    The distractor count is drawn uniformly and lowered until the adjacency
    constraint can be met. The default cap of 4 keeps chance (one over the
    number of shown targets) at or above 0.2.
    """
    if not 2 <= max_distractors <= 6:
        raise ValueError("max_distractors must lie in 2..6")
    pool = list(targets) if targets is not None else (over_obstacle_targets(scene) or list(scene.target_ids))
    out = {}
    for i in range(n_trials):
        g = pool[i % len(pool)]
        rng = np.random.default_rng(derive_seed(seed, 404, i))
        n_d = int(rng.integers(2, max_distractors + 1))
        sub_seed = int(rng.integers(2**31))
        while True:
            # middle-row targets leave room for at most 4 non-adjacent distractors
            try:
                sub = subsample_distractors(scene, g, n_d, sub_seed)
                break
            except ReachInferenceError:
                if n_d == 2:
                    raise
                n_d -= 1
        s = int(derive_seed(seed, g, i).generate_state(1)[0])
        traj = synthesize_trajectory(scene.target(g), scene, start_state(scene), params, s, value,
                                     actor_id=f"planner-{i}")
        out[f"{scene.condition_tag}-x{i:03d}-t{g:02d}"] = Trial(traj, sub)
    return out


def sample_responses(model_id: str, params, store: TrialStore, refs: Sequence[str],
                     fractions: Sequence[float], n_subjects: int = 1, seed: int = 0,
                     sitting_shift: float = 0.10, value=None) -> list[ResponseRecord]:
    """Simulated observers choosing targets by sampling the model posterior.

    Every subject sees every trial once at a stopping fraction drawn
    uniformly from ``fractions`` (shifted for seated trials).
    """
    out = []
    feats_cache: dict = {}
    for s in range(n_subjects):
        rng = np.random.default_rng(derive_seed(seed, 77, s))
        for ref in refs:
            trial = resolve(store, ref)
            fr = fractions_for(trial.scene.condition_tag, fractions, sitting_shift)
            f = fr[int(rng.integers(len(fr)))]
            n = prefix_length(len(trial.trajectory), f)
            key = (ref, n)
            if key not in feats_cache:
                rec = ResponseRecord("", ref, "", f, trial.trajectory.true_target,
                                     trial.trajectory.true_target, ref)
                feats_cache[key] = model_features(model_id, trial.trajectory.prefix(n), trial.scene,
                                                  params, value, record_seed(rec))
            ids = trial.scene.target_ids
            F = feats_cache[key].vector(ids)
            with np.errstate(invalid="ignore"):
                logits = np.where(np.isfinite(F), -rate(params) * F, -np.inf)
            if not np.isfinite(logits).any():
                logits = np.zeros(len(ids))
            p = np.exp(logits - logits.max())
            p /= p.sum()
            choice = ids[int(rng.choice(len(ids), p=p))]
            out.append(ResponseRecord(f"s{s:03d}", f"{ref}@{f:.2f}", trial.scene.condition_tag, f,
                                      choice, trial.trajectory.true_target, ref))
    return out


def random_straight_store(n_trials: int, seed: int = 0, n_frames: int = 30) -> dict[str, Trial]:
    """Cheap trials for fitting studies: noisy straight reaches from a fixed
    start toward each target of the standing grid."""
    from .core import make_trajectory
    from .harness import standing_scene

    scene = standing_scene()
    start = np.array([0.18, -0.1, 0.9])
    out = {}
    for i in range(n_trials):
        rng = np.random.default_rng(derive_seed(seed, 55, i))
        g = scene.targets[i % len(scene.targets)]
        u = np.linspace(0.0, 1.0, n_frames)[:, None]
        smooth = u * u * (3 - 2 * u)
        pts = start + smooth * (g.position - start) + rng.normal(0.0, 0.01, (n_frames, 3))
        pts[:, 2] += 0.15 * np.sin(math.pi * u[:, 0])
        traj = make_trajectory(pts, true_target=g.id, actor_id=f"line-{i}")
        out[f"line-{i:04d}-t{g.id:02d}"] = Trial(traj, scene)
    return out
