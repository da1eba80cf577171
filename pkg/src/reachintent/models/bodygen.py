"""Inverse planning over the simplified body.

The observed prefix is cut into chunks of ``q`` frames starting at the
second frame. For every chunk the body state at the preceding frame is
recovered by inverse kinematics, the planner is run toward each target from
that state, and the chunk is scored by its mean DTW divergence from the
planned wrist paths. A target's feature is the divergence summed over chunks.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, Mapping

import numpy as np
from scipy.optimize import least_squares

from ..alignment import mean_plan_divergence
from ..core import ReachInferenceError, SceneSpec, SkeletonFrame, Trajectory, wrist_path
from ..kinematics import KinematicState, _fk, neutral_state
from ..planner import derive_seed
from .heuristics import Features, _min_over_hands
from .params import BodyGenParams

if TYPE_CHECKING:
    from ..value import ValueEnsemble

_JOINT_ROWS = {"shoulder": 2, "elbow": 3, "wrist": 4}


@dataclass(frozen=True)
class StateFit:
    state: KinematicState
    wrist_error: float
    max_error: float


def fit_state(frame: SkeletonFrame, hand: str, scene: SceneSpec,
              seed: KinematicState | None = None, regularization: float = 1e-4) -> StateFit:
    """Least-squares inverse kinematics of the body to one observed frame.

    Matches the wrist, and the elbow, shoulder and head of the same side when
    they are tracked; a weak pull toward ``seed`` resolves redundancy.
    """
    body = scene.body
    seed = seed or neutral_state(hand)
    sign = 1.0 if hand == "right" else -1.0
    rows, obs = [], []
    for name, row in _JOINT_ROWS.items():
        key = f"{name}_{hand}"
        if key in frame.joints:
            rows.append(row)
            obs.append(frame.joints[key])
    if "head" in frame.joints:
        rows.append(5)
        obs.append(frame.joints["head"])
    obs = np.array(obs)
    lengths, origin = body.lengths(), np.asarray(scene.actor_base, dtype=float)
    lo, hi = body.lower(), body.upper()
    q0 = np.clip(seed.vector(), lo, hi)
    reg = np.sqrt(regularization)

    def residual(q):
        pts = _fk(q, sign, lengths, origin)
        return np.concatenate([(pts[rows] - obs).ravel(), reg * (q - q0)])

    sol = least_squares(residual, q0, bounds=(lo, hi), method="trf", xtol=1e-12,
                        ftol=1e-12, gtol=1e-12, max_nfev=400)
    pts = _fk(sol.x, sign, lengths, origin)
    errs = np.linalg.norm(pts[rows] - obs, axis=1)
    wrist_err = float(errs[rows.index(4)])
    state = KinematicState.from_vector(sol.x, None, frame.t, hand)
    return StateFit(state, wrist_err, float(errs.max()))


def chunk_starts(tau: int, q: int) -> list[int]:
    """0-based first indices of the chunks covering frames 1..tau-1."""
    return list(range(1, tau, q))


def _hand_features(traj: Trajectory, hand: str, scene: SceneSpec, params: BodyGenParams,
                   value, rng_seed: int, flags: list[str]) -> dict[int, float] | None:
    path = wrist_path(traj, hand)
    tau = len(path)
    total = {t.id: 0.0 for t in scene.targets}
    nominals: dict[tuple[int, int], np.ndarray] = {}
    seed_state = None
    used = 0
    n_plan = None
    for ci, start in enumerate(chunk_starts(tau, params.q)):
        chunk = path[start : min(start + params.q, tau)]
        fit = fit_state(traj.frames[start - 1], hand, scene, seed_state)
        seed_state = fit.state
        if fit.wrist_error > params.ik_tolerance:
            flags.append(f"state_match_failed:{hand}:chunk={ci}:err={fit.wrist_error:.3f}")
            nominals.clear()
            continue
        used += 1
        n_plan = int(np.ceil(params.horizon_factor * len(chunk)))
        for t in scene.targets:
            seed = int(derive_seed(rng_seed, ci, t.id).generate_state(1)[0])
            warm = [nominals.get((t.id, r)) for r in range(params.n_runs)]
            div, rollouts = mean_plan_divergence(
                chunk, t, scene, fit.state, params.n_runs, seed, params.planner, value,
                params.horizon_factor, nominal=warm, return_rollouts=True)
            total[t.id] += div
            for r, ro in enumerate(rollouts):
                if ro is not None:
                    nominals[(t.id, r)] = ro.nominals[min(len(chunk), len(ro.nominals) - 1)]
    if used == 0:
        return None
    return total


def bodygen_features(traj: Trajectory, scene: SceneSpec, params: BodyGenParams | None = None,
                     value: "ValueEnsemble | None" = None, rng_seed: int = 0) -> Features:
    params = params or BodyGenParams()
    if len(traj) < 2:
        raise ReachInferenceError("bodygen needs at least 2 frames")
    flags: list[str] = []
    per_hand = []
    for hand in traj.hands():
        f = _hand_features(traj, hand, scene, params, value, rng_seed, flags)
        if f is not None:
            per_hand.append(f)
    if not per_hand:
        raise ReachInferenceError("every chunk failed state matching: " + "; ".join(flags))
    return Features(_min_over_hands(per_hand), flags)


def bodygen_loglik(traj: Trajectory, scene: SceneSpec, params: BodyGenParams | None = None,
                   value: "ValueEnsemble | None" = None, rng_seed: int = 0) -> Mapping[int, float]:
    params = params or BodyGenParams()
    return bodygen_features(traj, scene, params, value, rng_seed).loglik(params.beta3)
