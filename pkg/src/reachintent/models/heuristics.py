"""Distance, linear-extrapolation and parabolic-extrapolation heuristics.

Each model scores target ``g`` as ``-rate * F[g]`` where the feature ``F``
does not depend on the rate. Features are exposed separately so that rate
fitting can reuse them.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..core import SceneSpec, Trajectory, wrist_path
from .geometry import (
    DegenerateWindowError,
    fit_line,
    fit_parabola,
    is_stationary,
    point_curve_distance,
    point_line_distance,
)
from .params import DistanceParams, LinHParams, ParamHParams


@dataclass
class Features:
    """Per-target non-negative feature; ``inf`` rules a target out."""

    values: dict[int, float]
    flags: list[str] = field(default_factory=list)

    def loglik(self, rate: float) -> dict[int, float]:
        return {g: (-rate * v if np.isfinite(v) else -np.inf) for g, v in self.values.items()}

    def vector(self, ids) -> np.ndarray:
        return np.array([self.values[g] for g in ids], dtype=float)


def _min_over_hands(per_hand: list[dict[int, float]]) -> dict[int, float]:
    # max log-likelihood over hands == min feature (rates are positive)
    out = dict(per_hand[0])
    for d in per_hand[1:]:
        for g, v in d.items():
            out[g] = min(out[g], v)
    return out


def distance_features(traj: Trajectory, scene: SceneSpec, params: DistanceParams | None = None) -> Features:
    """Wrist-to-target distance at the last observed frame only."""
    tau = len(traj) - 1
    per_hand = []
    for hand in traj.hands():
        w = wrist_path(traj, hand, tau, tau)[0]
        per_hand.append({t.id: float(np.linalg.norm(w - t.position)) for t in scene.targets})
    return Features(_min_over_hands(per_hand))


def _window_features(path: np.ndarray, scene: SceneSpec, h: int, alpha: int, kind: str,
                     ray: bool, flags: list[str]) -> dict[int, float]:
    tau = len(path)
    total = {t.id: 0.0 for t in scene.targets}
    used = 0
    for k in range(alpha + 1):
        end = tau - 1 - k
        start = end - h + 1
        if start < 0:
            flags.append(f"window_dropped:k={k}")
            continue
        win = path[start : end + 1]
        if is_stationary(win):
            flags.append(f"degenerate_window:k={k}")
            continue
        try:
            if kind == "line":
                line = fit_line(win)
                dist = lambda p: point_line_distance(line, p, win[-1] if ray else None)  # noqa: E731
            else:
                curve = fit_parabola(win, param_origin=start)
                dist = lambda p: point_curve_distance(curve, p, ray)  # noqa: E731
        except DegenerateWindowError:
            flags.append(f"degenerate_window:k={k}")
            continue
        used += 1
        for t in scene.targets:
            total[t.id] += dist(t.position)
    if used == 0:
        flags.append("no_window:uniform")
        return {g: 0.0 for g in total}
    return total


def linh_features(traj: Trajectory, scene: SceneSpec, params: LinHParams | None = None) -> Features:
    """Summed distance from each target to lines fitted on the last
    ``alpha1 + 1`` windows of ``h1`` frames."""
    params = params or LinHParams()
    flags: list[str] = []
    per_hand = [
        _window_features(wrist_path(traj, hand), scene, params.h1, params.alpha1, "line",
                         params.ray, flags)
        for hand in traj.hands()
    ]
    return Features(_min_over_hands(per_hand), flags)


def paramh_features(traj: Trajectory, scene: SceneSpec, params: ParamHParams | None = None) -> Features:
    params = params or ParamHParams()
    flags: list[str] = []
    per_hand = [
        _window_features(wrist_path(traj, hand), scene, params.h2, params.alpha2, "parabola",
                         params.ray, flags)
        for hand in traj.hands()
    ]
    return Features(_min_over_hands(per_hand), flags)


def distance_loglik(traj: Trajectory, scene: SceneSpec, params: DistanceParams | None = None) -> dict[int, float]:
    params = params or DistanceParams()
    return distance_features(traj, scene, params).loglik(params.theta)


def linh_loglik(traj: Trajectory, scene: SceneSpec, params: LinHParams | None = None) -> dict[int, float]:
    params = params or LinHParams()
    return linh_features(traj, scene, params).loglik(params.beta1)


def paramh_loglik(traj: Trajectory, scene: SceneSpec, params: ParamHParams | None = None) -> dict[int, float]:
    params = params or ParamHParams()
    return paramh_features(traj, scene, params).loglik(params.beta2)
