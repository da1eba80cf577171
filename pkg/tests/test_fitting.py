import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from reachintent.core import Prior, ReachInferenceError, SchemaError
from reachintent.fitting import (
    LOG_FLOOR,
    FeatureBatch,
    FitConfig,
    RecordFeatures,
    ResponseRecord,
    Trial,
    batch_log_posterior,
    fit_model,
    fit_rate,
    nll,
    nll_from_features,
    per_unit_loglik,
    prefix_length,
    record_log_posterior,
    split_by_target_parity,
    split_records,
)
from reachintent.harness import compare_models
from reachintent.models.params import DistanceParams, LinHParams
from reachintent.optim import AdamConfig
from reachintent.synthetic import random_straight_store, sample_responses


def random_features(rng, n_records=40, max_targets=8):
    out = []
    for _ in range(n_records):
        k = int(rng.integers(2, max_targets + 1))
        F = rng.exponential(0.3, k)
        if rng.random() < 0.2:
            F[rng.integers(k)] = np.inf
        lp = np.log(rng.dirichlet(np.ones(k)))
        idx = int(rng.choice(np.flatnonzero(np.isfinite(F))))
        out.append(RecordFeatures(tuple(range(1, k + 1)), F, lp, idx))
    return out


def test_prefix_length():
    assert prefix_length(20, 0.35) == 7
    assert prefix_length(20, 0.2) == 4
    assert prefix_length(10, 0.05) == 2
    assert prefix_length(7, 1.0) == 7
    assert prefix_length(3, 0.5) == 2


@given(st.integers(2, 500), st.floats(0.01, 1.0))
def test_prefix_length_bounds(n, f):
    k = prefix_length(n, f)
    assert 2 <= k <= n
    assert k >= f * n - 1e-6 or k == n


def test_parity_split():
    train, test = split_by_target_parity(range(1, 19))
    assert train == {1, 3, 5, 7, 9, 11, 13, 15, 17}
    assert test == {2, 4, 6, 8, 10, 12, 14, 16, 18}
    with pytest.raises(ReachInferenceError):
        split_by_target_parity([2, 4])
    with pytest.warns(RuntimeWarning):
        split_by_target_parity([1, 3])


def test_gradient_matches_central_differences():
    rng = np.random.default_rng(0)
    for _ in range(20):
        feats = random_features(rng)
        r = float(rng.uniform(0.5, 20))
        _, g, fl = nll_from_features(r, feats)
        h = 1e-5 * r
        # floored records are flat in the rate; the step must not cross the floor
        assert nll_from_features(r + h, feats)[2] == fl == nll_from_features(r - h, feats)[2]
        fd = (nll_from_features(r + h, feats)[0] - nll_from_features(r - h, feats)[0]) / (2 * h)
        assert abs(g - fd) <= 1e-4 * max(abs(fd), 1e-8)


def test_batch_matches_scalar_reference():
    rng = np.random.default_rng(1)
    feats = random_features(rng, 30)
    for r in (0.1, 3.0, 40.0):
        lp, g, fl = batch_log_posterior(r, FeatureBatch.pack(feats))
        for i, rf in enumerate(feats):
            ref = record_log_posterior(r, rf)
            assert lp[i] == pytest.approx(ref[0], abs=1e-10)
            assert g[i] == pytest.approx(ref[1], abs=1e-9)
            assert fl[i] == ref[2]


def test_log_floor_and_all_infinite():
    rf = RecordFeatures((1, 2), np.array([100.0, 0.0]), np.log([0.5, 0.5]), 0)
    assert record_log_posterior(10.0, rf) == (LOG_FLOOR, 0.0, True)
    dead = RecordFeatures((1, 2, 3), np.full(3, np.inf), np.log(np.full(3, 1 / 3)), 1)
    lp, g, fl = record_log_posterior(2.0, dead)
    assert lp == pytest.approx(-math.log(3)) and g == 0.0 and not fl
    assert nll_from_features(2.0, [dead])[0] == pytest.approx(math.log(3))


def test_rate_fit_finds_stationary_point():
    feats = random_features(np.random.default_rng(2), 200)
    r, f, ok = fit_rate(feats, 1.0, AdamConfig(lr=0.05, max_iters=3000, tol=1e-7))
    assert ok
    assert abs(nll_from_features(r, feats)[1]) < 1e-5
    assert f <= nll_from_features(r * 1.1, feats)[0] and f <= nll_from_features(r / 1.1, feats)[0]


@pytest.fixture(scope="module")
def straight():
    store = random_straight_store(36, seed=5)
    recs = sample_responses("distance", DistanceParams(4.0), store, list(store), (0.35, 0.65),
                            n_subjects=4, seed=6)
    return store, recs


def test_nll_uses_prefix_and_prior(straight):
    store, recs = straight
    a = nll("distance", DistanceParams(4.0), recs, "responses", store)
    tilted = {k: Trial(t.trajectory, t.scene, Prior({g: (5.0 if g == 1 else 1.0) for g in t.scene.target_ids}))
              for k, t in store.items()}
    b = nll("distance", DistanceParams(4.0), recs, "responses", tilted)
    assert a != b and np.isfinite(a) and np.isfinite(b)


def test_unresolvable_ref(straight):
    _, recs = straight
    with pytest.raises(SchemaError):
        nll("distance", DistanceParams(), recs[:1], "responses", {})


def test_test_records_cannot_influence_fit(straight):
    store, recs = straight
    cfg = FitConfig(fit_windows=False)
    a = fit_model("distance", recs, "responses", cfg, store)
    flipped = [replace(r, chosen_target=1 if r.chosen_target != 1 else 2) if r.true_target % 2 == 0 else r
               for r in recs]
    b = fit_model("distance", flipped, "responses", cfg, store)
    assert a.params == b.params and a.train_nll == b.train_nll
    assert a.test_nll != b.test_nll
    assert a.n_train + a.n_test == len(recs)


class SpyStore(dict):
    def __init__(self, *a):
        super().__init__(*a)
        self.log = []

    def __getitem__(self, k):
        self.log.append(k)
        return super().__getitem__(k)


def test_test_records_read_only_after_optimization(straight):
    store, recs = straight
    spy = SpyStore(store)
    fit_model("linh", recs, "responses", FitConfig(), spy)
    test_refs = {r.trajectory_ref for r in recs if r.true_target % 2 == 0}
    first_test = min(i for i, k in enumerate(spy.log) if k in test_refs)
    assert all(k in test_refs for k in spy.log[first_test:])


def test_distance_rate_recovery_small(straight):
    store, recs = straight
    res = fit_model("distance", recs, "responses", FitConfig(), store)
    assert res.params.theta == pytest.approx(4.0, rel=0.3)
    assert res.converged


def test_ground_truth_mode_differs(straight):
    store, recs = straight
    a = fit_model("distance", recs, "responses", FitConfig(), store)
    b = fit_model("distance", recs, "ground_truth", FitConfig(), store)
    assert b.params.theta != a.params.theta


def test_fit_result_dict(straight):
    store, recs = straight
    res = fit_model("linh", recs, "responses", FitConfig(), store)
    d = res.to_dict(FitConfig())
    assert set(d["params"]) == {"beta1", "h1", "alpha1", "ray"}
    assert len(d["config_digest"]) == 16
    assert isinstance(res.params, LinHParams)


def test_per_unit_rows_feed_comparison(straight):
    store, recs = straight
    fits = {"distance": DistanceParams(4.0), "linh": LinHParams()}
    rows = per_unit_loglik(fits, recs, ("subject", "stopping_fraction"), store)
    assert len(rows) == 2 * 4 * 2
    assert {"subject", "stopping_fraction", "model", "mean_log_posterior", "n"} <= set(rows[0])
    comp = compare_models(rows, unit="subject", split="stopping_fraction")
    for s in (0.35, 0.65):
        fr = [w["fraction"] for w in comp.winners if w["split"] == s]
        assert sum(fr) == pytest.approx(1.0)
    with pytest.raises(SchemaError):
        per_unit_loglik(fits, recs, "shoe_size", store)


def test_record_validation():
    with pytest.raises(SchemaError):
        ResponseRecord("s", "t", "standing", 0.0, 1, 1, "x")
    with pytest.raises(ReachInferenceError):
        split_records([])
