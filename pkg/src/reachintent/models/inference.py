"""Model dispatch: per-target features, log-likelihoods and posteriors."""

from __future__ import annotations

from typing import TYPE_CHECKING

from ..core import GoalPosterior, Prior, SceneSpec, Trajectory, combine_posterior
from .bodygen import bodygen_features
from .heuristics import Features, distance_features, linh_features, paramh_features
from .params import check_model, default_params, rate

if TYPE_CHECKING:
    from ..value import ValueEnsemble


def model_features(model_id: str, traj: Trajectory, scene: SceneSpec, params=None,
                   value: "ValueEnsemble | None" = None, rng_seed: int = 0) -> Features:
    check_model(model_id)
    params = params if params is not None else default_params(model_id)
    if model_id == "distance":
        return distance_features(traj, scene, params)
    if model_id == "linh":
        return linh_features(traj, scene, params)
    if model_id == "paramh":
        return paramh_features(traj, scene, params)
    return bodygen_features(traj, scene, params, value, rng_seed)


def model_loglik(model_id: str, traj: Trajectory, scene: SceneSpec, params=None,
                 value: "ValueEnsemble | None" = None, rng_seed: int = 0) -> dict[int, float]:
    params = params if params is not None else default_params(model_id)
    return model_features(model_id, traj, scene, params, value, rng_seed).loglik(rate(params))


def infer(model_id: str, traj_prefix: Trajectory, scene: SceneSpec, params=None,
          prior: Prior | None = None, value: "ValueEnsemble | None" = None,
          rng_seed: int = 0) -> GoalPosterior:
    """Posterior over the scene's targets given an observed prefix."""
    prior = prior or Prior.uniform(scene.target_ids)
    ll = model_loglik(model_id, traj_prefix, scene, params, value, rng_seed)
    return combine_posterior(prior, ll, tau_index=len(traj_prefix) - 1)


def posterior_from_features(features: Features, rate_value: float, prior: Prior,
                            tau_index: int = -1) -> GoalPosterior:
    return combine_posterior(prior, features.loglik(rate_value), tau_index)
