"""Maximum-likelihood fitting of model parameters to response data.

Rates (theta, beta1, beta2, beta3) are fitted with Adam on their logarithm
using an analytic gradient over cached per-target features. Window and
chunk lengths are fitted with Nelder-Mead over a continuous relaxation that
is rounded at evaluation. Records whose true target has an odd id form the
training set; the rest are held out.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import math
import warnings
import zlib
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.special import logsumexp

from .core import Prior, ReachInferenceError, SceneSpec, SchemaError, Trajectory
from .models.inference import model_features
from .models.params import check_model, default_params, params_to_dict, rate, with_rate
from .optim import AdamConfig, NelderMeadConfig, adam, nelder_mead

LOG_FLOOR = -30.0
MODES = ("responses", "ground_truth")


@dataclass(frozen=True)
class ResponseRecord:
    subject_id: str
    trial_id: str
    condition_tag: str
    stopping_fraction: float
    chosen_target: int
    true_target: int
    trajectory_ref: str

    def __post_init__(self):
        if not 0 < self.stopping_fraction <= 1:
            raise SchemaError(f"stopping_fraction {self.stopping_fraction} outside (0, 1]",
                              where="stopping_fraction")

    def target(self, mode: str) -> int:
        return self.chosen_target if mode == "responses" else self.true_target


@dataclass(frozen=True)
class Trial:
    """An observed trajectory together with the scene it was shown in."""

    trajectory: Trajectory
    scene: SceneSpec
    prior: Prior | None = None


TrialStore = Mapping[str, Trial]


def prefix_length(n_frames: int, fraction: float) -> int:
    """Frames shown at ``fraction``: ``ceil(fraction * n)``, at least 2."""
    # the epsilon keeps 0.35 * 20 = 7.000000000000001 from rounding up to 8
    return max(2, min(n_frames, math.ceil(fraction * n_frames - 1e-9)))


def split_by_target_parity(targets: Iterable[int]) -> tuple[set[int], set[int]]:
    """Odd ids train, even ids test."""
    ids = list(targets)
    if not ids:
        raise ValueError("no targets to split")
    train = {g for g in ids if g % 2 == 1}
    test = {g for g in ids if g % 2 == 0}
    if not train:
        raise ReachInferenceError("no odd target ids: the training set would be empty")
    if not test:
        warnings.warn("no even target ids: the test set is empty", RuntimeWarning, stacklevel=2)
    return train, test


def split_records(records: Sequence[ResponseRecord]) -> tuple[list[ResponseRecord], list[ResponseRecord]]:
    """Split records by the parity of their true target (see
    ``split_by_target_parity``)."""
    if not records:
        raise ReachInferenceError("no records to split")
    train_ids, _ = split_by_target_parity({r.true_target for r in records})
    train = [r for r in records if r.true_target in train_ids]
    test = [r for r in records if r.true_target not in train_ids]
    return train, test


@dataclass
class RecordFeatures:
    """Rate-free features of one record's prefix, ready for repeated NLL
    evaluation."""

    ids: tuple[int, ...]
    values: np.ndarray
    log_prior: np.ndarray
    index: int


def record_seed(record: ResponseRecord) -> int:
    return zlib.crc32(record.trajectory_ref.encode())


def record_features(model_id: str, params, record: ResponseRecord, store: TrialStore,
                    mode: str, value=None, cache: dict | None = None) -> RecordFeatures:
    trial = resolve(store, record.trajectory_ref)
    n = prefix_length(len(trial.trajectory), record.stopping_fraction)
    key = (model_id, _window_key(params), record.trajectory_ref, n)
    if cache is not None and key in cache:
        feats = cache[key]
    else:
        feats = model_features(model_id, trial.trajectory.prefix(n), trial.scene, params,
                               value, record_seed(record))
        if cache is not None:
            cache[key] = feats
    ids = trial.scene.target_ids
    target = record.target(mode)
    if target not in ids:
        raise SchemaError(f"target {target} not in scene of {record.trajectory_ref}", where=record.trial_id)
    prior = trial.prior or Prior.uniform(ids)
    with np.errstate(divide="ignore"):
        lp = np.log(np.array([prior.probs[g] for g in ids]))
    return RecordFeatures(ids, feats.vector(ids), lp, ids.index(target))


def resolve(store: TrialStore, ref: str) -> Trial:
    try:
        return store[ref]
    except KeyError:
        raise SchemaError(f"unresolvable trajectory_ref {ref!r}", where="trajectory_ref") from None


def _window_key(params) -> tuple:
    d = params_to_dict(params)
    d.pop(params.rate_name)
    return tuple(sorted((k, json.dumps(v, sort_keys=True)) for k, v in d.items()))


def record_log_posterior(rate_value: float, rf: RecordFeatures) -> tuple[float, float, bool]:
    """(log posterior of the record's target, its derivative in the rate,
    floored?)."""
    F = rf.values
    finite = np.isfinite(F)
    if not finite.any():
        k = len(F)
        return -math.log(k), 0.0, False
    s = np.where(finite, -rate_value * np.where(finite, F, 0.0) + rf.log_prior, -np.inf)
    lse = logsumexp(s)
    lp = float(s[rf.index] - lse)
    if not lp >= LOG_FLOOR:
        return LOG_FLOOR, 0.0, True
    p = np.exp(s - lse)
    expected = float(np.sum(p[finite] * F[finite]))
    return lp, -float(F[rf.index]) + expected, False


@dataclass
class FeatureBatch:
    """Records padded to a common target count for vectorized NLL.

    Padding slots carry ``F = inf`` and ``log_prior = -inf``.
    """

    F: np.ndarray
    log_prior: np.ndarray
    index: np.ndarray

    @classmethod
    def pack(cls, feats: Sequence[RecordFeatures]) -> "FeatureBatch":
        k = max(len(rf.values) for rf in feats)
        n = len(feats)
        F = np.full((n, k), np.inf)
        lp = np.full((n, k), -np.inf)
        for i, rf in enumerate(feats):
            F[i, : len(rf.values)] = rf.values
            lp[i, : len(rf.values)] = rf.log_prior
        return cls(F, lp, np.array([rf.index for rf in feats], dtype=int))

    def __len__(self) -> int:
        return len(self.index)


def batch_log_posterior(rate_value: float, batch: FeatureBatch) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized ``record_log_posterior``: (log posteriors, rate
    derivatives, floored mask)."""
    F = batch.F
    real = np.isfinite(batch.log_prior)
    finite = np.isfinite(F) & real
    Fz = np.where(finite, F, 0.0)
    s = np.where(finite, -rate_value * Fz + np.where(real, batch.log_prior, 0.0), -np.inf)
    rows = np.arange(len(batch))
    any_finite = finite.any(axis=1)
    s = np.where(any_finite[:, None], s, 0.0)
    m = s.max(axis=1)
    lse = m + np.log(np.sum(np.exp(s - m[:, None]), axis=1))
    lp = s[rows, batch.index] - lse
    p = np.exp(s - lse[:, None])
    grad = -Fz[rows, batch.index] + np.sum(np.where(finite, p * Fz, 0.0), axis=1)
    # no finite likelihood at all: uniform over the record's real targets
    lp = np.where(any_finite, lp, -np.log(np.maximum(real.sum(axis=1), 1)))
    grad = np.where(any_finite, grad, 0.0)
    floored = ~(lp >= LOG_FLOOR)
    lp = np.where(floored, LOG_FLOOR, lp)
    grad = np.where(floored, 0.0, grad)
    return lp, grad, floored


def nll_from_features(rate_value: float, feats) -> tuple[float, float, int]:
    """Negative log-likelihood, its derivative in the rate, and the number
    of floored records."""
    batch = feats if isinstance(feats, FeatureBatch) else FeatureBatch.pack(feats)
    with np.errstate(divide="ignore", invalid="ignore"):
        lp, g, fl = batch_log_posterior(rate_value, batch)
    return float(-lp.sum()), float(-g.sum()), int(fl.sum())


def nll(model_id: str, params, dataset: Sequence[ResponseRecord], mode: str = "responses",
        store: TrialStore | None = None, value=None, cache: dict | None = None) -> float:
    """``-sum log posterior(target)`` over records, each evaluated at its
    stopping-fraction prefix; zero posteriors count as ``LOG_FLOOR``."""
    if mode not in MODES:
        raise SchemaError(f"mode must be one of {MODES}", where="mode")
    check_model(model_id)
    feats = [record_features(model_id, params, r, store, mode, value, cache) for r in dataset]
    total, _, floored = nll_from_features(rate(params), feats)
    if floored:
        warnings.warn(f"{floored} record(s) hit the log floor {LOG_FLOOR}", RuntimeWarning, stacklevel=2)
    return total


@dataclass(frozen=True)
class FitConfig:
    nelder_mead: NelderMeadConfig = field(default_factory=lambda: NelderMeadConfig(
        max_iters=30, tol=0.49, initial_step=2.0))
    adam: AdamConfig = field(default_factory=lambda: AdamConfig(lr=0.05, max_iters=1500, tol=1e-7))
    window_bounds: Mapping[str, tuple[int, int]] = field(default_factory=lambda: {
        "h1": (2, 30), "h2": (3, 30), "alpha1": (0, 6), "alpha2": (0, 6), "q": (2, 40)})
    fit_windows: bool = True
    integer_polish: bool = True
    init: Mapping | None = None  # overrides of the starting parameters


@dataclass
class FitResult:
    model_id: str
    params: object
    train_nll: float
    test_nll: float
    n_evals: int
    converged: bool
    n_train: int = 0
    n_test: int = 0
    flags: list[str] = field(default_factory=list)

    def to_dict(self, config: FitConfig | None = None) -> dict:
        d = {
            "model": self.model_id,
            "params": params_to_dict(self.params),
            "train_nll": self.train_nll,
            "test_nll": self.test_nll if math.isfinite(self.test_nll) else None,
            "n_evals": self.n_evals,
            "converged": self.converged,
            "n_train": self.n_train,
            "n_test": self.n_test,
            "flags": list(self.flags),
        }
        if config is not None:
            d["config_digest"] = config_digest(config)
        return d


def config_digest(config: FitConfig) -> str:
    blob = json.dumps({
        "nelder_mead": config.nelder_mead.__dict__, "adam": config.adam.__dict__,
        "window_bounds": {k: list(v) for k, v in sorted(config.window_bounds.items())},
        "fit_windows": config.fit_windows, "integer_polish": config.integer_polish, "init": dict(config.init or {}),
    }, sort_keys=True, default=list)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def fit_rate(feats: Sequence[RecordFeatures], rate0: float, config: AdamConfig):
    """Adam on log-rate; returns (rate, nll, converged)."""
    feats = FeatureBatch.pack(feats)

    def fg(x):
        r = math.exp(float(x[0]))
        f, g, _ = nll_from_features(r, feats)
        return f, np.array([g * r])

    res = adam(fg, [math.log(rate0)], config)
    return math.exp(float(res.x[0])), res.fun, res.converged


def fit_model(model_id: str, dataset: Sequence[ResponseRecord], mode: str = "responses",
              config: FitConfig | None = None, store: TrialStore | None = None,
              value=None) -> FitResult:
    """Fit on odd-true-target records; report the NLL on the rest.

    Window parameters are searched by Nelder-Mead (outer loop); for every
    candidate the rate is refitted by Adam (inner loop) on cached features.
    Held-out records are only evaluated after optimization ends.
    """
    check_model(model_id)
    if mode not in MODES:
        raise SchemaError(f"mode must be one of {MODES}", where="mode")
    cfg = config or FitConfig()
    train, test = split_records(list(dataset))
    base = default_params(model_id)
    if cfg.init:
        base = replace(base, **dict(cfg.init))
    names = base.window_names if cfg.fit_windows else ()
    cache: dict = {}
    evaluated: dict[tuple, tuple[float, float, bool]] = {}
    flags: list[str] = []

    def params_at(x) -> object:
        changes = {}
        for name, v in zip(names, np.atleast_1d(x)):
            lo, hi = cfg.window_bounds[name]
            changes[name] = int(min(max(round(float(v)), lo), hi))
        return replace(base, **changes)

    def inner(p) -> tuple[float, float, bool]:
        key = tuple(getattr(p, n) for n in names)
        if key not in evaluated:
            feats = [record_features(model_id, p, r, store, mode, value, cache) for r in train]
            evaluated[key] = fit_rate(feats, rate(p), cfg.adam)
        return evaluated[key]

    converged = True
    if names:
        x0 = np.array([getattr(base, n) for n in names], dtype=float)
        res = nelder_mead(lambda x: inner(params_at(x))[1], x0, cfg.nelder_mead)
        best = params_at(res.x)
        converged = res.converged
        if not res.converged:
            flags.append("nelder_mead_not_converged")
        if cfg.integer_polish:
            best = _polish(best, names, inner, params_at)
    else:
        best = base
    r_hat, train_nll, adam_ok = inner(best)
    if not adam_ok:
        flags.append("adam_not_converged")
    fitted = with_rate(best, r_hat)
    if test:
        test_feats = [record_features(model_id, fitted, r, store, mode, value, cache) for r in test]
        test_nll, _, floored = nll_from_features(r_hat, test_feats)
        if floored:
            flags.append(f"log_floor:test={floored}")
    else:
        test_nll = math.nan
        flags.append("empty_test_set")
    return FitResult(model_id, fitted, float(train_nll), float(test_nll), len(evaluated),
                     converged and adam_ok, len(train), len(test), flags)


def _polish(best, names, inner, params_at):
    """Greedy descent over the integer neighbourhood (every combination of
    -1/0/+1 steps); the rounded simplex can stall beside a lower cell."""
    steps = [np.array(d) for d in itertools.product((-1, 0, 1), repeat=len(names)) if any(d)]
    current = np.array([getattr(best, n) for n in names], dtype=float)
    f_cur = inner(best)[1]
    while True:
        cands = [params_at(current + d) for d in steps]
        vals = [inner(c)[1] for c in cands]
        i = int(np.argmin(vals))
        if not vals[i] < f_cur:
            return best
        best, f_cur = cands[i], vals[i]
        current = np.array([getattr(best, n) for n in names], dtype=float)


GROUP_KEYS = {
    "subject": lambda r: r.subject_id,
    "target": lambda r: r.true_target,
    "stopping_fraction": lambda r: r.stopping_fraction,
    "condition": lambda r: r.condition_tag,
}


def sort_key(v):
    """Orders numbers numerically and before strings."""
    return (1, str(v), 0.0) if isinstance(v, str) else (0, "", float(v))


def per_unit_loglik(fits: Mapping[str, object], dataset: Sequence[ResponseRecord],
                    group_by: str | Sequence[str] = "subject", store: TrialStore | None = None,
                    mode: str = "responses", value=None) -> list[dict]:
    """Mean log posterior of each record's target per group and model.

    Parameters
    ----------
    fits
        Model id to fitted params (or a ``FitResult``).
    group_by
        One key of ``GROUP_KEYS`` or a tuple of them; each row carries one
        column per key, so ``("subject", "stopping_fraction")`` feeds
        ``harness.compare_models`` directly.

    Returns
    -------
    list of dict
        Rows sorted by group then model, with ``mean_log_posterior`` and ``n``.
    """
    keys = (group_by,) if isinstance(group_by, str) else tuple(group_by)
    bad = [k for k in keys if k not in GROUP_KEYS]
    if not keys or bad:
        raise SchemaError(f"group_by must be drawn from {sorted(GROUP_KEYS)}", where="group_by")
    rows = []
    cache: dict = {}
    for model_id, p in fits.items():
        p = p.params if isinstance(p, FitResult) else p
        groups: dict = {}
        for r in dataset:
            rf = record_features(model_id, p, r, store, mode, value, cache)
            lp, _, _ = record_log_posterior(rate(p), rf)
            groups.setdefault(tuple(GROUP_KEYS[k](r) for k in keys), []).append(lp)
        for g, vals in groups.items():
            rows.append(dict(zip(keys, g)) | {"model": model_id, "mean_log_posterior": float(np.mean(vals)),
                                              "n": len(vals)})
    rows.sort(key=lambda row: (tuple(sort_key(row[k]) for k in keys), row["model"]))
    return rows
