"""Forward planner: MPPI over the simplified body.

The per-step utility is ``-p1*d + p2*h - p3*energy - p4*contact`` where ``d``
is the wrist-target distance, ``h`` the head height above the table,
``energy`` the weighted squared joint-velocity command and ``contact`` the
summed squared capsule penetration. MPPI samples ``K`` perturbed copies of a
nominal velocity sequence of length ``H``, rolls each out, and replaces the
nominal by the exponentially weighted average of the samples.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING, Sequence

import numpy as np
from numba import njit

from .core import NumericError, SceneSpec, SkeletonFrame, TargetSpec, Trajectory
from .kinematics import (
    NDOF,
    Action,
    BodyProportions,
    KinematicState,
    _contact,
    _fk_into,
    body_points,
    contact_penalty,
    energy,
    head_height,
    scene_boxes,
)

if TYPE_CHECKING:
    from .value import ValueEnsemble


@dataclass(frozen=True)
class PlannerParams:
    p1: float = 10.0
    p2: float = 1.0
    p3: float = 0.1
    p4: float = 1.0e4
    horizon_H: int = 20
    samples_K: int = 64
    temperature_lambda: float = 3.0
    noise_sigma: tuple[float, ...] | None = None  # None -> 0.2 * speed cap per DoF
    dt: float = 1.0 / 30.0
    max_steps: int = 150
    stop_radius: float = 0.02
    terminal_weight: float = 1.0
    noise_correlation: float = 0.8  # AR(1) coefficient of the exploration noise along the horizon

    def __post_init__(self):
        for name in ("p1", "p2", "p3", "p4"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.horizon_H < 1 or self.samples_K < 2:
            raise ValueError("need horizon_H >= 1 and samples_K >= 2")
        if self.temperature_lambda <= 0:
            raise ValueError("temperature_lambda must be > 0")
        if not 0 < self.dt <= 0.1:
            raise ValueError("dt must lie in (0, 0.1]")
        if self.noise_sigma is not None:
            sig = tuple(float(s) for s in self.noise_sigma)
            if len(sig) != NDOF or min(sig) <= 0:
                raise ValueError(f"noise_sigma needs {NDOF} positive entries")
            object.__setattr__(self, "noise_sigma", sig)

    def sigma(self, body: BodyProportions) -> np.ndarray:
        if self.noise_sigma is None:
            return 0.2 * body.speed_caps()
        return np.asarray(self.noise_sigma)

    def weights(self) -> np.ndarray:
        return np.array([self.p1, self.p2, self.p3, self.p4])


@dataclass
class PlanRollout:
    states: list[KinematicState]
    actions: list[Action]
    wrist_points: np.ndarray
    per_step_utility: list[float]
    goal_id: int
    complete: bool
    nominals: list[np.ndarray] = field(default_factory=list, repr=False)

    def __len__(self) -> int:
        return len(self.states)


class _SceneArrays:
    """Scene and body packed for the kernels."""

    def __init__(self, scene: SceneSpec, hand: str):
        body = scene.body
        self.lengths = body.lengths()
        self.origin = np.asarray(scene.actor_base, dtype=float)
        self.lo = body.lower()
        self.hi = body.upper()
        self.caps = body.speed_caps()
        self.wts = body.weights()
        self.boxes = scene_boxes(scene)
        self.radius = body.capsule_radius
        self.table_h = scene.table_height
        self.hand_sign = 1.0 if hand == "right" else -1.0


@njit(cache=True)
def _rollouts(q0, hand_sign, lengths, origin, lo, hi, caps, wts, boxes, radius,
              goal, table_h, pw, dt, nominal, eps, terminal_weight,
              returns, applied, q_end, first_contact):
    n_samples, horizon, ndof = eps.shape
    pts = np.empty((6, 3))
    q = np.empty(ndof)
    for k in range(n_samples):
        for i in range(ndof):
            q[i] = q0[i]
        total = 0.0
        d = 0.0
        for h in range(horizon):
            e = 0.0
            for i in range(ndof):
                v = nominal[h, i] + eps[k, h, i]
                v = min(max(v, -caps[i]), caps[i])
                applied[k, h, i] = v
                e += wts[i] * v * v
                q[i] = min(max(q[i] + v * dt, lo[i]), hi[i])
            _fk_into(q, hand_sign, lengths, origin, pts)
            dx = pts[4, 0] - goal[0]
            dy = pts[4, 1] - goal[1]
            dz = pts[4, 2] - goal[2]
            d = math.sqrt(dx * dx + dy * dy + dz * dz)
            c = _contact(pts, radius, boxes)
            if h == 0:
                first_contact[k] = c
            total += -pw[0] * d + pw[1] * (pts[5, 2] - table_h) - pw[2] * e * dt - pw[3] * c
        returns[k] = total - terminal_weight * pw[0] * d
        for i in range(ndof):
            q_end[k, i] = q[i]


def step_utility(state: KinematicState, next_state: KinematicState, action, goal: TargetSpec,
                 scene: SceneSpec, params: PlannerParams) -> float:
    """Utility of moving from ``state`` to ``next_state`` under ``action``.

    Distance, head height and contact are measured at ``next_state``.
    """
    body = scene.body
    pts = body_points(next_state, body, scene)
    d = float(np.linalg.norm(pts[4] - goal.position))
    return (-params.p1 * d + params.p2 * head_height(next_state, body, scene)
            - params.p3 * energy(action, params.dt, body)
            - params.p4 * contact_penalty(next_state, body, scene))


def derive_seed(seed: int, *path: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(seed) & 0xFFFFFFFF, *[int(p) for p in path]])


def wrist_of(state: KinematicState, scene: SceneSpec) -> np.ndarray:
    return body_points(state, scene.body, scene)[4]


def mppi_step(state: KinematicState, goal: TargetSpec, scene: SceneSpec, params: PlannerParams,
              value: "ValueEnsemble | None" = None, rng_seed=0,
              nominal: np.ndarray | None = None, _arrays: _SceneArrays | None = None) -> Action:
    """One receding-horizon MPPI update; returns the action to execute.

    ``nominal`` is the (H, ndof) velocity sequence being refined. When given
    it is updated in place: replaced by the weighted average and shifted one
    step forward. A wrist already within ``stop_radius`` of the goal holds
    still (zero action).
    """
    arr = _arrays or _SceneArrays(scene, state.hand)
    H, K = params.horizon_H, params.samples_K
    if nominal is None:
        nominal = np.zeros((H, NDOF))
    goal_pos = np.asarray(goal.position, dtype=float)
    q0 = state.vector()
    pts = np.empty((6, 3))
    _fk_into(q0, arr.hand_sign, arr.lengths, arr.origin, pts)
    if np.linalg.norm(pts[4] - goal_pos) < params.stop_radius:
        nominal[:] = 0.0
        return Action(np.zeros(NDOF))

    seq = rng_seed if isinstance(rng_seed, np.random.SeedSequence) else derive_seed(rng_seed)
    rng = np.random.default_rng(seq)
    eps = rng.standard_normal((K, H, NDOF))
    rho = params.noise_correlation
    if rho > 0:
        scale = math.sqrt(1.0 - rho * rho)
        for h in range(1, H):
            eps[:, h] = rho * eps[:, h - 1] + scale * eps[:, h]
    eps *= params.sigma(state_body(scene))
    returns = np.empty(K)
    applied = np.empty((K, H, NDOF))
    q_end = np.empty((K, NDOF))
    first_contact = np.empty(K)
    terminal_weight = 0.0 if value is not None else params.terminal_weight
    _rollouts(q0, arr.hand_sign, arr.lengths, arr.origin, arr.lo, arr.hi, arr.caps, arr.wts,
              arr.boxes, arr.radius, goal_pos, arr.table_h, params.weights(), params.dt,
              nominal, eps, terminal_weight, returns, applied, q_end, first_contact)
    if value is not None:
        returns = returns + value.predict_states(q_end, arr.hand_sign, goal_pos)
    finite = np.isfinite(returns)
    if not finite.any():
        raise NumericError("every MPPI rollout returned a non-finite utility")
    r = np.where(finite, returns, -np.inf)
    w = np.exp((r - r.max()) / params.temperature_lambda)
    w /= w.sum()
    new = np.tensordot(w, applied, axes=1)
    if _next_contact(q0, new[0], params.dt, arr, pts) > 0.0:
        # the average of collision-free samples can still penetrate: fall back
        # to the best sample whose first step is clear, else hold still
        clear = finite & (first_contact == 0.0)
        if clear.any():
            new = applied[int(np.argmax(np.where(clear, r, -np.inf)))].copy()
        else:
            new = np.zeros_like(new)
    action = new[0].copy()
    nominal[:-1] = new[1:]
    nominal[-1] = 0.0
    return Action(action)


def _next_contact(q0, a, dt, arr: _SceneArrays, pts) -> float:
    q = np.clip(q0 + np.clip(a, -arr.caps, arr.caps) * dt, arr.lo, arr.hi)
    _fk_into(q, arr.hand_sign, arr.lengths, arr.origin, pts)
    return _contact(pts, arr.radius, arr.boxes)


def state_body(scene: SceneSpec) -> BodyProportions:
    return scene.body


def plan(goal: TargetSpec, scene: SceneSpec, start_state: KinematicState,
         params: PlannerParams | None = None, value: "ValueEnsemble | None" = None,
         rng_seed: int = 0, max_steps: int | None = None,
         nominal: np.ndarray | None = None) -> PlanRollout:
    """Run MPPI from ``start_state`` until the wrist is within ``stop_radius``
    of the goal or ``max_steps`` actions have been taken.

    ``max_steps`` overrides ``params.max_steps`` (used for short look-ahead
    plans). ``nominal`` warm-starts the MPPI sequence and is not modified.
    """
    params = params or PlannerParams()
    from .kinematics import step as kin_step

    limit = params.max_steps if max_steps is None else max_steps
    arr = _SceneArrays(scene, start_state.hand)
    U = np.zeros((params.horizon_H, NDOF)) if nominal is None else np.array(nominal, dtype=float)
    goal_pos = np.asarray(goal.position, dtype=float)
    states = [start_state]
    actions: list[Action] = []
    utils: list[float] = []
    nominals = [U.copy()]
    wrists = [wrist_of(start_state, scene)]
    complete = bool(np.linalg.norm(wrists[0] - goal_pos) < params.stop_radius)
    s = start_state
    for k in range(limit):
        if complete:
            break
        a = mppi_step(s, goal, scene, params, value, derive_seed(rng_seed, k), U, arr)
        nxt = kin_step(s, a, params.dt, scene.body)
        utils.append(step_utility(s, nxt, a, goal, scene, params))
        actions.append(a)
        states.append(nxt)
        nominals.append(U.copy())
        wrists.append(wrist_of(nxt, scene))
        s = nxt
        complete = bool(np.linalg.norm(wrists[-1] - goal_pos) < params.stop_radius)
    return PlanRollout(states, actions, np.array(wrists), utils, goal.id, complete, nominals)


TRACKED = ("wrist", "elbow", "shoulder")


def rollout_to_trajectory(rollout: PlanRollout, scene: SceneSpec, actor_id: str = "synthetic") -> Trajectory:
    hand = rollout.states[0].hand
    frames = []
    for s in rollout.states:
        pts = body_points(s, scene.body, scene)
        joints = {f"wrist_{hand}": pts[4], f"elbow_{hand}": pts[3],
                  f"shoulder_{hand}": pts[2], "head": pts[5]}
        frames.append(SkeletonFrame(s.t, joints))
    return Trajectory(tuple(frames), actor_id, rollout.goal_id, hand)


def synthesize_trajectory(goal: TargetSpec, scene: SceneSpec, start_state: KinematicState,
                          params: PlannerParams | None = None, rng_seed: int = 0,
                          value: "ValueEnsemble | None" = None,
                          actor_id: str = "synthetic") -> Trajectory:
    """Plan to ``goal`` and return the rollout as an observed trajectory."""
    rollout = plan(goal, scene, start_state, params, value, rng_seed)
    if not rollout.complete:
        raise NumericError(
            f"plan to target {goal.id} did not reach stop_radius within max_steps"
        )
    return rollout_to_trajectory(rollout, scene, actor_id)


def path_length(points: Sequence) -> float:
    p = np.asarray(points)
    return float(np.linalg.norm(np.diff(p, axis=0), axis=1).sum())


def with_params(params: PlannerParams, **changes) -> PlannerParams:
    return replace(params, **changes)
