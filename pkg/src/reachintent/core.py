"""Shared domain types and the Bayes combination step.

World frame: x runs laterally along the table, y is depth (away from the
actor), z is up. The table surface is the plane ``z = table_height``.
All lengths are meters, all times seconds.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import TYPE_CHECKING, Mapping, Sequence

import numpy as np

if TYPE_CHECKING:
    from .kinematics import BodyProportions

HANDS = ("left", "right")
CONDITIONS = ("standing", "sitting", "obstacle", "custom")


class ReachInferenceError(Exception):
    """Base class for contract violations on inputs."""


class SchemaError(ReachInferenceError):
    """Malformed input data. ``where`` names the offending line or field."""

    def __init__(self, message: str, where: str | None = None):
        self.where = where
        super().__init__(f"{where}: {message}" if where else message)


class MissingJointError(ReachInferenceError):
    def __init__(self, joint: str, frame_index: int):
        self.joint = joint
        self.frame_index = frame_index
        super().__init__(f"joint {joint!r} missing in frame {frame_index}")


class KeyMismatchError(ReachInferenceError):
    pass


class NumericError(ArithmeticError):
    """Non-finite values where finite ones are required."""


def vec3(v) -> np.ndarray:
    """Coerce ``v`` to a finite float array of shape (3,)."""
    a = np.asarray(v, dtype=float).reshape(-1)
    if a.shape != (3,):
        raise SchemaError(f"expected 3 components, got {a.shape[0]}")
    if not np.all(np.isfinite(a)):
        raise SchemaError("non-finite coordinate")
    a = a.copy()
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class TargetSpec:
    id: int
    position: np.ndarray

    def __post_init__(self):
        if int(self.id) != self.id or self.id < 1:
            raise SchemaError(f"target id must be an integer >= 1, got {self.id}")
        object.__setattr__(self, "id", int(self.id))
        object.__setattr__(self, "position", vec3(self.position))


@dataclass(frozen=True)
class ObstacleSpec:
    center: np.ndarray
    half_extents: np.ndarray
    kind: str = "box"

    def __post_init__(self):
        if self.kind != "box":
            raise SchemaError(f"unsupported obstacle kind {self.kind!r}")
        object.__setattr__(self, "center", vec3(self.center))
        he = vec3(self.half_extents)
        if np.any(he <= 0):
            raise SchemaError("obstacle half_extents must be > 0")
        object.__setattr__(self, "half_extents", he)

    @property
    def top(self) -> float:
        return float(self.center[2] + self.half_extents[2])


@dataclass(frozen=True)
class SceneSpec:
    """World state: targets, obstacles, table and the actor's body."""

    targets: tuple[TargetSpec, ...]
    obstacles: tuple[ObstacleSpec, ...]
    table_height: float
    table_bounds: tuple[np.ndarray, np.ndarray]
    actor_base: np.ndarray
    body: "BodyProportions"
    condition_tag: str = "custom"

    def __post_init__(self):
        object.__setattr__(self, "targets", tuple(self.targets))
        object.__setattr__(self, "obstacles", tuple(self.obstacles))
        lo, hi = vec3(self.table_bounds[0]), vec3(self.table_bounds[1])
        if np.any(lo >= hi):
            raise SchemaError("table_bounds min must be < max componentwise")
        object.__setattr__(self, "table_bounds", (lo, hi))
        object.__setattr__(self, "actor_base", vec3(self.actor_base))
        object.__setattr__(self, "table_height", float(self.table_height))
        if len(self.targets) < 2:
            raise SchemaError("a scene needs at least 2 targets")
        ids = [t.id for t in self.targets]
        if len(set(ids)) != len(ids):
            raise SchemaError("duplicate target ids")
        for t in self.targets:
            if t.position[2] < self.table_height - 1e-9:
                raise SchemaError(f"target {t.id} lies below the table surface")
        if self.condition_tag not in CONDITIONS:
            raise SchemaError(f"unknown condition_tag {self.condition_tag!r}")

    @property
    def target_ids(self) -> tuple[int, ...]:
        return tuple(t.id for t in self.targets)

    def target(self, target_id: int) -> TargetSpec:
        for t in self.targets:
            if t.id == target_id:
                return t
        raise KeyError(target_id)

    def target_positions(self) -> np.ndarray:
        return np.array([t.position for t in self.targets])

    def on_table(self, p) -> bool:
        lo, hi = self.table_bounds
        return bool(lo[0] <= p[0] <= hi[0] and lo[1] <= p[1] <= hi[1])

    def replace(self, **changes) -> "SceneSpec":
        from dataclasses import replace

        return replace(self, **changes)

    def translated(self, offset) -> "SceneSpec":
        off = np.asarray(offset, dtype=float)
        return self.replace(
            targets=tuple(TargetSpec(t.id, t.position + off) for t in self.targets),
            obstacles=tuple(
                ObstacleSpec(o.center + off, o.half_extents) for o in self.obstacles
            ),
            table_height=self.table_height + off[2],
            table_bounds=(self.table_bounds[0] + off, self.table_bounds[1] + off),
            actor_base=self.actor_base + off,
        )


@dataclass(frozen=True)
class SkeletonFrame:
    t: float
    joints: Mapping[str, np.ndarray]

    def __post_init__(self):
        if not math.isfinite(self.t) or self.t < 0:
            raise SchemaError(f"frame time must be finite and >= 0, got {self.t}")
        joints = {str(k): vec3(v) for k, v in dict(self.joints).items()}
        if "wrist_left" not in joints and "wrist_right" not in joints:
            raise SchemaError("frame carries neither wrist_left nor wrist_right")
        object.__setattr__(self, "joints", joints)


@dataclass(frozen=True)
class Trajectory:
    frames: tuple[SkeletonFrame, ...]
    actor_id: str = "synthetic"
    true_target: int | None = None
    active_hand: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "frames", tuple(self.frames))
        if len(self.frames) < 2:
            raise SchemaError("a trajectory needs at least 2 frames")
        ts = np.array([f.t for f in self.frames])
        dts = np.diff(ts)
        if np.any(dts <= 0):
            raise SchemaError("frame times must be strictly increasing")
        if dts.max() > 2.0 * dts.min() + 1e-12:
            raise SchemaError("frame spacing is not near-uniform (max/min interval > 2)")
        if self.active_hand is not None and self.active_hand not in HANDS:
            raise SchemaError(f"active_hand must be left or right, got {self.active_hand!r}")

    def __len__(self) -> int:
        return len(self.frames)

    def prefix(self, n: int) -> "Trajectory":
        """First ``n`` frames. Prefixes shorter than 2 frames keep 2."""
        from dataclasses import replace

        return replace(self, frames=self.frames[: max(2, min(n, len(self.frames)))])

    def hands(self) -> tuple[str, ...]:
        """Hands usable for inference: the annotated one, else every hand
        present in all frames."""
        if self.active_hand is not None:
            return (self.active_hand,)
        present = tuple(
            h for h in HANDS if all(f"wrist_{h}" in f.joints for f in self.frames)
        )
        if not present:
            raise SchemaError("no wrist is tracked in every frame")
        return present

    def translated(self, offset) -> "Trajectory":
        from dataclasses import replace

        off = np.asarray(offset, dtype=float)
        frames = tuple(
            SkeletonFrame(f.t, {k: v + off for k, v in f.joints.items()})
            for f in self.frames
        )
        return replace(self, frames=frames)


@dataclass(frozen=True)
class GoalPosterior:
    probs: Mapping[int, float]
    tau_index: int
    uniform_fallback: bool = False

    def __post_init__(self):
        object.__setattr__(self, "probs", dict(self.probs))

    def argmax(self) -> int:
        """Most probable target; ties go to the lowest id."""
        best = max(self.probs.values())
        return min(g for g, p in self.probs.items() if p == best)

    def rank_of(self, target_id: int) -> int:
        """1-based rank of ``target_id`` (ties share the best rank)."""
        p = self.probs[target_id]
        return 1 + sum(1 for v in self.probs.values() if v > p)

    def vector(self, ids: Sequence[int] | None = None) -> np.ndarray:
        ids = sorted(self.probs) if ids is None else ids
        return np.array([self.probs[g] for g in ids])


@dataclass(frozen=True)
class Prior:
    probs: Mapping[int, float]

    def __post_init__(self):
        p = {int(k): float(v) for k, v in dict(self.probs).items()}
        if not p or any(v < 0 or not math.isfinite(v) for v in p.values()):
            raise SchemaError("prior must be a non-empty map of finite non-negative values")
        z = sum(p.values())
        if z <= 0:
            raise SchemaError("prior has zero mass")
        object.__setattr__(self, "probs", {k: v / z for k, v in sorted(p.items())})

    @classmethod
    def uniform(cls, ids: Sequence[int]) -> "Prior":
        return cls({g: 1.0 for g in ids})


def combine_posterior(
    prior: Prior, log_likelihoods: Mapping[int, float], tau_index: int = -1
) -> GoalPosterior:
    """Posterior over targets from a prior and per-target log-likelihoods.

    ``-inf`` log-likelihoods are allowed (the target is ruled out). If every
    target is ruled out the result falls back to uniform and is flagged.
    """
    if set(prior.probs) != set(log_likelihoods):
        raise KeyMismatchError(
            f"prior ids {sorted(prior.probs)} != likelihood ids {sorted(log_likelihoods)}"
        )
    ids = sorted(prior.probs)
    ll = np.array([float(log_likelihoods[g]) for g in ids])
    if np.any(np.isnan(ll)) or np.any(ll == np.inf):
        raise NumericError("log-likelihoods must be finite or -inf")
    with np.errstate(divide="ignore"):
        logp = np.log(np.array([prior.probs[g] for g in ids])) + ll
    top = logp.max()
    if not np.isfinite(top):
        warnings.warn("all targets have zero likelihood; using a uniform posterior")
        u = 1.0 / len(ids)
        return GoalPosterior({g: u for g in ids}, tau_index, uniform_fallback=True)
    w = np.exp(logp - top)
    w /= w.sum()
    return GoalPosterior(dict(zip(ids, w.tolist())), tau_index)


def wrist_path(traj: Trajectory, hand: str, start: int = 0, stop: int | None = None) -> np.ndarray:
    """Wrist positions of frames ``start..stop`` inclusive, shape (n, 3).

    ``stop`` defaults to the last frame.
    """
    if hand not in HANDS:
        raise SchemaError(f"hand must be left or right, got {hand!r}")
    stop = len(traj.frames) - 1 if stop is None else stop
    if not 0 <= start <= stop < len(traj.frames):
        raise IndexError(f"range [{start}..{stop}] outside 0..{len(traj.frames) - 1}")
    key = f"wrist_{hand}"
    out = np.empty((stop - start + 1, 3))
    for i in range(start, stop + 1):
        joints = traj.frames[i].joints
        if key not in joints:
            raise MissingJointError(key, i)
        out[i - start] = joints[key]
    return out


def make_trajectory(
    points: np.ndarray,
    dt: float = 1.0 / 30.0,
    hand: str = "right",
    true_target: int | None = None,
    actor_id: str = "synthetic",
    extra_joints: Mapping[str, np.ndarray] | None = None,
) -> Trajectory:
    """Build a trajectory from an (n, 3) wrist path sampled every ``dt``."""
    points = np.asarray(points, dtype=float)
    extra = {k: np.asarray(v, dtype=float) for k, v in (extra_joints or {}).items()}
    frames = []
    for i, p in enumerate(points):
        joints = {f"wrist_{hand}": p}
        joints.update({k: v[i] for k, v in extra.items()})
        frames.append(SkeletonFrame(i * dt, joints))
    return Trajectory(tuple(frames), actor_id, true_target, hand)


__all__ = [
    "CONDITIONS",
    "HANDS",
    "GoalPosterior",
    "KeyMismatchError",
    "MissingJointError",
    "NumericError",
    "ObstacleSpec",
    "Prior",
    "ReachInferenceError",
    "SceneSpec",
    "SchemaError",
    "SkeletonFrame",
    "TargetSpec",
    "Trajectory",
    "combine_posterior",
    "make_trajectory",
    "vec3",
    "wrist_path",
]
