"""Simplified articulated body: a torso on a moving platform plus one arm.

Degrees of freedom, in vector order::

    0 base_x, 1 base_y      platform offset from the scene's actor_base (m)
    2 torso_pitch           forward lean about the lateral axis (rad)
    3 torso_yaw             rotation about vertical (rad)
    4 shoulder_flex         raises the arm forward
    5 shoulder_abd          raises the arm sideways (mirrored per hand)
    6 shoulder_twist        rotation about the upper-arm axis
    7 elbow                 flexion, 0 = straight

Dynamics are first order: the action is a joint-velocity command that is
clamped to the speed caps, integrated over ``dt`` and clamped to the joint
limits. The hot loops live in numba kernels (``_fk``, ``_contact``) which the
planner reuses for its batched rollouts.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Mapping

import numpy as np
from numba import njit

from .core import NumericError, SceneSpec, SchemaError, vec3

JOINTS = (
    "base_x",
    "base_y",
    "torso_pitch",
    "torso_yaw",
    "shoulder_flex",
    "shoulder_abd",
    "shoulder_twist",
    "elbow",
)
NDOF = len(JOINTS)

DEFAULT_LIMITS = {
    "base_x": (-1.2, 1.2),
    "base_y": (-0.3, 0.15),
    "torso_pitch": (-0.3, 1.2),
    "torso_yaw": (-1.4, 1.4),
    "shoulder_flex": (-1.0, 3.1),
    "shoulder_abd": (-0.6, 1.8),
    "shoulder_twist": (-1.6, 1.6),
    "elbow": (0.0, 2.6),
}
DEFAULT_SPEEDS = {
    "torso_pitch": 1.2,
    "torso_yaw": 1.2,
    "shoulder_flex": 2.5,
    "shoulder_abd": 2.5,
    "shoulder_twist": 2.5,
    "elbow": 3.0,
}
DEFAULT_ENERGY_WEIGHTS = {"base_x": 4.0, "base_y": 4.0}


@dataclass(frozen=True)
class BodyProportions:
    """Segment lengths, joint limits and speed caps of the simplified body.

    ``hip_height`` is measured from the floor (``actor_base.z``); the torso
    runs from the hip pivot to the shoulder line, the head sits
    ``head_offset`` further along the torso axis.
    """

    torso_length: float = 0.45
    upper_arm_length: float = 0.30
    forearm_length: float = 0.25
    shoulder_width: float = 0.36
    head_offset: float = 0.25
    hip_height: float = 0.95
    joint_limits: Mapping[str, tuple[float, float]] = field(
        default_factory=lambda: dict(DEFAULT_LIMITS)
    )
    max_joint_speed: Mapping[str, float] = field(default_factory=lambda: dict(DEFAULT_SPEEDS))
    max_base_speed: float = 0.6
    capsule_radius: float = 0.05
    energy_weights: Mapping[str, float] = field(
        default_factory=lambda: dict(DEFAULT_ENERGY_WEIGHTS)
    )

    def __post_init__(self):
        for name in ("torso_length", "upper_arm_length", "forearm_length",
                     "shoulder_width", "head_offset", "hip_height",
                     "max_base_speed", "capsule_radius"):
            v = getattr(self, name)
            if not np.isfinite(v) or v <= 0:
                raise SchemaError(f"{name} must be > 0, got {v}", where=f"body.{name}")
        limits = {k: (float(lo), float(hi)) for k, (lo, hi) in dict(self.joint_limits).items()}
        if set(limits) != set(JOINTS):
            raise SchemaError(f"joint_limits must name exactly {JOINTS}", where="body.joint_limits")
        for k, (lo, hi) in limits.items():
            if not lo < hi:
                raise SchemaError(f"limit min must be < max for {k}", where="body.joint_limits")
        speeds = {k: float(v) for k, v in dict(self.max_joint_speed).items()}
        if set(speeds) != set(JOINTS[2:]) or min(speeds.values()) <= 0:
            raise SchemaError("max_joint_speed must give a positive cap for every angular joint",
                              where="body.max_joint_speed")
        weights = {k: float(v) for k, v in dict(self.energy_weights).items()}
        if not set(weights) <= set(JOINTS) or min(weights.values(), default=1.0) < 0:
            raise SchemaError("energy_weights must map joint names to values >= 0",
                              where="body.energy_weights")
        object.__setattr__(self, "joint_limits", limits)
        object.__setattr__(self, "max_joint_speed", speeds)
        object.__setattr__(self, "energy_weights", weights)

    @property
    def arm_length(self) -> float:
        return self.upper_arm_length + self.forearm_length

    def lower(self) -> np.ndarray:
        return np.array([self.joint_limits[j][0] for j in JOINTS])

    def upper(self) -> np.ndarray:
        return np.array([self.joint_limits[j][1] for j in JOINTS])

    def speed_caps(self) -> np.ndarray:
        return np.array([self.max_base_speed] * 2 + [self.max_joint_speed[j] for j in JOINTS[2:]])

    def weights(self) -> np.ndarray:
        return np.array([self.energy_weights.get(j, 1.0) for j in JOINTS])

    def lengths(self) -> np.ndarray:
        """Packed segment lengths in the order the kernels expect."""
        return np.array([
            self.hip_height, self.torso_length, self.upper_arm_length,
            self.forearm_length, self.shoulder_width, self.head_offset,
        ])


@dataclass(frozen=True)
class KinematicState:
    base_xy: tuple[float, float] = (0.0, 0.0)
    torso_pitch: float = 0.0
    torso_yaw: float = 0.0
    shoulder: tuple[float, float, float] = (0.0, 0.0, 0.0)
    elbow: float = 0.0
    joint_velocities: tuple[float, ...] = (0.0,) * NDOF
    t: float = 0.0
    hand: str = "right"

    def __post_init__(self):
        if self.hand not in ("left", "right"):
            raise SchemaError(f"hand must be left or right, got {self.hand!r}")

    def vector(self) -> np.ndarray:
        return np.array([*self.base_xy, self.torso_pitch, self.torso_yaw, *self.shoulder, self.elbow],
                        dtype=float)

    @classmethod
    def from_vector(cls, q, velocities=None, t: float = 0.0, hand: str = "right") -> "KinematicState":
        q = [float(v) for v in q]
        vel = tuple(float(v) for v in velocities) if velocities is not None else (0.0,) * NDOF
        return cls((q[0], q[1]), q[2], q[3], (q[4], q[5], q[6]), q[7], vel, float(t), hand)

    @property
    def hand_sign(self) -> float:
        return 1.0 if self.hand == "right" else -1.0

    def is_valid(self, body: BodyProportions, tol: float = 1e-9) -> bool:
        q = self.vector()
        v = np.abs(np.asarray(self.joint_velocities))
        return bool(np.all(q >= body.lower() - tol) and np.all(q <= body.upper() + tol)
                    and np.all(v <= body.speed_caps() + tol))


@dataclass(frozen=True)
class Action:
    joint_velocity_command: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.joint_velocity_command, dtype=float).reshape(-1)
        if a.shape != (NDOF,):
            raise SchemaError(f"action needs {NDOF} components, got {a.shape[0]}")
        object.__setattr__(self, "joint_velocity_command", a)


def neutral_state(hand: str = "right") -> KinematicState:
    """Upright, arm hanging, platform at the actor base."""
    return KinematicState(hand=hand)


# --------------------------------------------------------------------------
# numba kernels

@njit(cache=True, inline="always")
def _mul(a, b):
    # 3x3 matrices as row-major 9-tuples; keeps the kernels allocation free
    return (
        a[0] * b[0] + a[1] * b[3] + a[2] * b[6],
        a[0] * b[1] + a[1] * b[4] + a[2] * b[7],
        a[0] * b[2] + a[1] * b[5] + a[2] * b[8],
        a[3] * b[0] + a[4] * b[3] + a[5] * b[6],
        a[3] * b[1] + a[4] * b[4] + a[5] * b[7],
        a[3] * b[2] + a[4] * b[5] + a[5] * b[8],
        a[6] * b[0] + a[7] * b[3] + a[8] * b[6],
        a[6] * b[1] + a[7] * b[4] + a[8] * b[7],
        a[6] * b[2] + a[7] * b[5] + a[8] * b[8],
    )


@njit(cache=True, inline="always")
def _rx(t):
    c, s = np.cos(t), np.sin(t)
    return (1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)


@njit(cache=True, inline="always")
def _ry(t):
    c, s = np.cos(t), np.sin(t)
    return (c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)


@njit(cache=True, inline="always")
def _rz(t):
    c, s = np.cos(t), np.sin(t)
    return (c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)


@njit(cache=True)
def _fk_into(q, hand_sign, lengths, origin, out):
    """Write hip, torso top, shoulder, elbow, wrist, head into ``out`` (6, 3)."""
    hip_h, torso, upper, fore, width, head_off = (
        lengths[0], lengths[1], lengths[2], lengths[3], lengths[4], lengths[5])
    rt = _mul(_rz(q[3]), _rx(-q[2]))
    ra = _mul(_mul(_mul(rt, _rx(q[4])), _ry(-hand_sign * q[5])), _rz(hand_sign * q[6]))
    rf = _mul(ra, _rx(q[7]))
    half = hand_sign * 0.5 * width
    for i in range(3):
        hip = origin[i] + (q[i] if i < 2 else hip_h)
        top = hip + torso * rt[3 * i + 2]
        shoulder = top + half * rt[3 * i]
        elbow = shoulder - upper * ra[3 * i + 2]
        out[0, i] = hip
        out[1, i] = top
        out[2, i] = shoulder
        out[3, i] = elbow
        out[4, i] = elbow - fore * rf[3 * i + 2]
        out[5, i] = top + head_off * rt[3 * i + 2]


@njit(cache=True)
def _fk(q, hand_sign, lengths, origin):
    """Rows: hip, torso top, shoulder, elbow, wrist, head."""
    out = np.empty((6, 3))
    _fk_into(q, hand_sign, lengths, origin, out)
    return out


@njit(cache=True)
def _box_sdf(px, py, pz, c, h):
    ux = abs(px - c[0]) - h[0]
    uy = abs(py - c[1]) - h[1]
    uz = abs(pz - c[2]) - h[2]
    ox = max(ux, 0.0)
    oy = max(uy, 0.0)
    oz = max(uz, 0.0)
    return np.sqrt(ox * ox + oy * oy + oz * oz) + min(max(ux, max(uy, uz)), 0.0)


@njit(cache=True)
def _seg_box_sd(p0, p1, c, h):
    """Exact min over the segment of the box signed distance.

    The box SDF restricted to a segment is convex and piecewise either
    sqrt-of-quadratic (outside) or max-of-linear (inside), so its minimum
    is at an endpoint, a piece boundary, or a stationary point of one piece.
    All such parameters are enumerated in closed form and evaluated.
    """
    a = p0 - c
    b = p1 - p0
    cand = np.empty(64)
    n = 0
    cand[n] = 0.0
    n += 1
    cand[n] = 1.0
    n += 1
    for i in range(3):
        if b[i] != 0.0:
            cand[n] = (h[i] - a[i]) / b[i]
            n += 1
            cand[n] = (-h[i] - a[i]) / b[i]
            n += 1
            cand[n] = -a[i] / b[i]
            n += 1
    # outside pieces: sum over active axes of (s_i x_i - h_i)^2
    for code in range(27):
        num = 0.0
        den = 0.0
        k = code
        for i in range(3):
            s = (k % 3) - 1
            k //= 3
            if s != 0:
                num += (s * a[i] - h[i]) * s * b[i]
                den += b[i] * b[i]
        if den > 0.0:
            cand[n] = -num / den
            n += 1
    # inside pieces: crossings of s_i x_i - h_i between two axes
    for i in range(3):
        for j in range(i + 1, 3):
            for si in (-1.0, 1.0):
                for sj in (-1.0, 1.0):
                    den = si * b[i] - sj * b[j]
                    if den != 0.0:
                        cand[n] = ((h[i] - h[j]) - (si * a[i] - sj * a[j])) / den
                        n += 1
    best = np.inf
    for m in range(n):
        t = min(max(cand[m], 0.0), 1.0)
        d = _box_sdf(a[0] + t * b[0] + c[0], a[1] + t * b[1] + c[1], a[2] + t * b[2] + c[2], c, h)
        if d < best:
            best = d
    return best


@njit(cache=True)
def _capsule_penetration(p0, p1, radius, c, h):
    for i in range(3):
        lo = min(p0[i], p1[i]) - radius
        hi = max(p0[i], p1[i]) + radius
        if lo >= c[i] + h[i] or hi <= c[i] - h[i]:
            return 0.0
    return max(0.0, radius - _seg_box_sd(p0, p1, c, h))


@njit(cache=True)
def _contact(pts, radius, boxes):
    """Sum of squared penetration depths of torso, upper arm and forearm
    capsules against every box. ``boxes`` rows are (center, half_extents)."""
    total = 0.0
    for k in range(boxes.shape[0]):
        c = boxes[k, :3]
        h = boxes[k, 3:]
        for s in range(3):
            if s == 0:
                p0, p1 = pts[0], pts[1]
            elif s == 1:
                p0, p1 = pts[2], pts[3]
            else:
                p0, p1 = pts[3], pts[4]
            pen = _capsule_penetration(p0, p1, radius, c, h)
            total += pen * pen
    return total


@njit(cache=True)
def _min_clearance(pts, radius, boxes):
    """Smallest capsule-to-box signed distance (negative = penetrating)."""
    best = np.inf
    for k in range(boxes.shape[0]):
        c = boxes[k, :3]
        h = boxes[k, 3:]
        for s in range(3):
            if s == 0:
                p0, p1 = pts[0], pts[1]
            elif s == 1:
                p0, p1 = pts[2], pts[3]
            else:
                p0, p1 = pts[3], pts[4]
            d = _seg_box_sd(p0, p1, c, h) - radius
            if d < best:
                best = d
    return best


@njit(cache=True)
def _step(q, a, dt, caps, lo, hi, q_out, v_out):
    for i in range(q.shape[0]):
        v = min(max(a[i], -caps[i]), caps[i])
        v_out[i] = v
        q_out[i] = min(max(q[i] + v * dt, lo[i]), hi[i])


# --------------------------------------------------------------------------
# public API

def scene_boxes(scene: SceneSpec) -> np.ndarray:
    """Table slab followed by obstacles, as rows of (center, half_extents)."""
    lo, hi = scene.table_bounds
    rows = [np.concatenate([(lo + hi) / 2, (hi - lo) / 2])]
    rows += [np.concatenate([o.center, o.half_extents]) for o in scene.obstacles]
    return np.array(rows, dtype=float)


def _origin(scene_or_origin) -> np.ndarray:
    if scene_or_origin is None:
        return np.zeros(3)
    if isinstance(scene_or_origin, SceneSpec):
        return np.asarray(scene_or_origin.actor_base, dtype=float)
    return np.asarray(vec3(scene_or_origin), dtype=float)


def body_points(state: KinematicState, body: BodyProportions, origin=None) -> np.ndarray:
    """(6, 3) array: hip, torso top, shoulder, elbow, wrist, head."""
    return _fk(state.vector(), state.hand_sign, body.lengths(), _origin(origin))


def forward_kinematics(state: KinematicState, body: BodyProportions, origin=None) -> dict:
    """World positions of wrist, elbow, shoulder and head.

    ``origin`` is the actor base (a Vec3 or a SceneSpec); defaults to the
    world origin.
    """
    pts = body_points(state, body, origin)
    return {"wrist": pts[4], "elbow": pts[3], "shoulder": pts[2], "head": pts[5]}


def step(state: KinematicState, action: Action | np.ndarray, dt: float,
         body: BodyProportions) -> KinematicState:
    if not 0 < dt <= 0.1:
        raise ValueError(f"dt must lie in (0, 0.1], got {dt}")
    a = action.joint_velocity_command if isinstance(action, Action) else np.asarray(action, float)
    if not np.all(np.isfinite(a)):
        raise NumericError("non-finite action")
    q = np.empty(NDOF)
    v = np.empty(NDOF)
    _step(state.vector(), a, dt, body.speed_caps(), body.lower(), body.upper(), q, v)
    return KinematicState.from_vector(q, v, state.t + dt, state.hand)


def energy(action: Action | np.ndarray, dt: float, body: BodyProportions) -> float:
    """Weighted quadratic effort of the clamped command over one step."""
    a = action.joint_velocity_command if isinstance(action, Action) else np.asarray(action, float)
    caps = body.speed_caps()
    v = np.clip(a, -caps, caps)
    return float(np.sum(body.weights() * v * v) * dt)


def contact_penalty(state: KinematicState, body: BodyProportions, scene: SceneSpec) -> float:
    pts = body_points(state, body, scene)
    return float(_contact(pts, body.capsule_radius, scene_boxes(scene)))


def min_clearance(state: KinematicState, body: BodyProportions, scene: SceneSpec) -> float:
    pts = body_points(state, body, scene)
    return float(_min_clearance(pts, body.capsule_radius, scene_boxes(scene)))


def capsule_box_distance(p0, p1, radius: float, center, half_extents) -> float:
    """Signed distance between a capsule and a box (negative = overlap)."""
    return float(_seg_box_sd(np.asarray(p0, float), np.asarray(p1, float),
                             np.asarray(center, float), np.asarray(half_extents, float))) - radius


def head_height(state: KinematicState, body: BodyProportions, scene: SceneSpec) -> float:
    return float(body_points(state, body, scene)[5, 2] - scene.table_height)


def clamp_state(state: KinematicState, body: BodyProportions) -> KinematicState:
    q = np.clip(state.vector(), body.lower(), body.upper())
    return replace(state, base_xy=(q[0], q[1]), torso_pitch=q[2], torso_yaw=q[3],
                   shoulder=(q[4], q[5], q[6]), elbow=q[7])
