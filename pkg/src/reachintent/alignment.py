"""Dynamic time warping between wrist paths, and the plan divergence built on it."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np
from numba import njit

from .core import NumericError, SceneSpec, TargetSpec
from .kinematics import KinematicState
from .planner import PlannerParams, derive_seed, plan

if TYPE_CHECKING:
    from .value import ValueEnsemble


@dataclass(frozen=True)
class DtwResult:
    cost: float
    normalized_cost: float
    path: tuple[tuple[int, int], ...]


@njit(cache=True)
def _dtw_tables(a, b):
    """Accumulated cost and path length, lexicographic on (cost, length)."""
    n, m = a.shape[0], b.shape[0]
    acc = np.full((n, m), np.inf)
    length = np.zeros((n, m), dtype=np.int64)
    for i in range(n):
        for j in range(m):
            d = 0.0
            for k in range(a.shape[1]):
                diff = a[i, k] - b[j, k]
                d += diff * diff
            d = math.sqrt(d)
            if i == 0 and j == 0:
                acc[i, j] = d
                length[i, j] = 1
                continue
            best = np.inf
            best_len = 0
            # diagonal first so that exact ties prefer the shorter path
            if i > 0 and j > 0:
                best = acc[i - 1, j - 1]
                best_len = length[i - 1, j - 1]
            if i > 0:
                c, ln = acc[i - 1, j], length[i - 1, j]
                if c < best or (c == best and ln < best_len):
                    best, best_len = c, ln
            if j > 0:
                c, ln = acc[i, j - 1], length[i, j - 1]
                if c < best or (c == best and ln < best_len):
                    best, best_len = c, ln
            acc[i, j] = best + d
            length[i, j] = best_len + 1
    return acc, length


def _backtrack(acc: np.ndarray, length: np.ndarray, i: int, j: int) -> tuple[tuple[int, int], ...]:
    path = [(i, j)]
    while i > 0 or j > 0:
        options = []
        if i > 0 and j > 0:
            options.append((acc[i - 1, j - 1], length[i - 1, j - 1], 0, i - 1, j - 1))
        if i > 0:
            options.append((acc[i - 1, j], length[i - 1, j], 1, i - 1, j))
        if j > 0:
            options.append((acc[i, j - 1], length[i, j - 1], 2, i, j - 1))
        _, _, _, i, j = min(options)
        path.append((i, j))
    return tuple(reversed(path))


def _as_points(x) -> np.ndarray:
    a = np.asarray(x, dtype=float)
    if a.ndim == 1:
        a = a[:, None]
    if a.shape[0] == 0:
        raise ValueError("DTW needs non-empty sequences")
    return np.ascontiguousarray(a)


def dtw(a, b, open_end: bool = False) -> DtwResult:
    """Align two point sequences with steps (1,0), (0,1), (1,1) and
    Euclidean local cost.

    With ``open_end`` the whole of ``a`` is aligned against the best prefix
    of ``b`` (the path may end at any ``(n-1, j)``).
    """
    a, b = _as_points(a), _as_points(b)
    acc, length = _dtw_tables(a, b)
    n, m = acc.shape
    j = m - 1
    if open_end:
        last = acc[n - 1]
        best = last.min()
        ties = np.flatnonzero(last == best)
        j = int(ties[np.argmin(length[n - 1, ties])])
    cost = float(acc[n - 1, j])
    return DtwResult(cost, cost / int(length[n - 1, j]), _backtrack(acc, length, n - 1, j))


def dtw_cost(a, b, open_end: bool = False) -> tuple[float, float]:
    """(cost, normalized_cost) without building the path."""
    a, b = _as_points(a), _as_points(b)
    acc, length = _dtw_tables(a, b)
    n, m = acc.shape
    j = m - 1
    if open_end:
        last = acc[n - 1]
        ties = np.flatnonzero(last == last.min())
        j = int(ties[np.argmin(length[n - 1, ties])])
    return float(acc[n - 1, j]), float(acc[n - 1, j] / length[n - 1, j])


def plan_segment(rollout, n_points: int) -> np.ndarray:
    """Wrist points following the start state, at most ``n_points`` of them.
    A plan that never moves contributes its start point."""
    pts = rollout.wrist_points[1 : n_points + 1]
    return pts if len(pts) else rollout.wrist_points[-1:]


def mean_plan_divergence(observed_chunk, goal: TargetSpec, scene: SceneSpec,
                         resume_state: KinematicState, n_runs: int = 5, rng_seed: int = 0,
                         params: PlannerParams | None = None, value: "ValueEnsemble | None" = None,
                         horizon_factor: float = 1.5, nominal=None,
                         return_rollouts: bool = False):
    """Mean path-normalized DTW cost between an observed wrist chunk and
    planner look-aheads toward ``goal`` started from ``resume_state``.

    Each run plans ``ceil(horizon_factor * len(chunk))`` steps with seed
    ``(rng_seed, run)`` and aligns the chunk against the best-matching prefix
    of that look-ahead. Runs whose planner fails numerically are dropped; if
    every run fails the divergence is ``inf``.

    ``nominal`` warm-starts MPPI: one (H, ndof) array shared by all runs, or
    a list with one entry (or None) per run.
    """
    chunk = _as_points(observed_chunk)
    if n_runs < 1:
        raise ValueError("n_runs must be >= 1")
    params = params or PlannerParams()
    n_plan = int(math.ceil(horizon_factor * len(chunk)))
    warm = list(nominal) if isinstance(nominal, (list, tuple)) else [nominal] * n_runs
    costs = []
    rollouts = []
    for run in range(n_runs):
        try:
            r = plan(goal, scene, resume_state, params, value,
                     rng_seed=run_seed(rng_seed, run), max_steps=n_plan, nominal=warm[run])
        except NumericError:
            rollouts.append(None)
            continue
        rollouts.append(r)
        costs.append(dtw_cost(chunk, plan_segment(r, n_plan), open_end=True)[1])
    div = float(np.mean(costs)) if costs else math.inf
    return (div, rollouts) if return_rollouts else div


def run_seed(seed: int, run: int) -> int:
    """Planner seed of run ``run``; run 0 uses ``seed`` itself."""
    if run == 0:
        return int(seed)
    return int(derive_seed(seed, 7919, run).generate_state(1)[0])
