import numpy as np
import pytest

from reachintent.core import SchemaError
from reachintent.kinematics import neutral_state
from reachintent.value import (
    INPUT_DIM,
    MLP,
    N_NETWORKS,
    ValueEnsemble,
    ValueTrainingConfig,
    features,
    train_value_ensemble,
)


def test_mlp_gradients_match_finite_differences():
    rng = np.random.default_rng(0)
    net = MLP.init(rng)
    x = rng.normal(size=(7, INPUT_DIM))
    y = rng.normal(size=7)
    _, gw, gb = net.loss_and_grads(x, y)
    for params, grads in ((net.weights, gw), (net.biases, gb)):
        for p, g in zip(params, grads):
            for _ in range(5):
                idx = tuple(rng.integers(0, s) for s in p.shape)
                old = p[idx]
                p[idx] = old + 1e-6
                up = net.loss_and_grads(x, y)[0]
                p[idx] = old - 1e-6
                down = net.loss_and_grads(x, y)[0]
                p[idx] = old
                assert (up - down) / 2e-6 == pytest.approx(g[idx], rel=1e-5, abs=1e-8)


def test_mlp_shape_check():
    net = MLP.init(np.random.default_rng(0))
    with pytest.raises(SchemaError):
        MLP(net.weights[:2], net.biases[:2])


def test_features_layout():
    f = features(np.arange(8.0)[None], -1.0, (1.0, 2.0, 3.0))
    assert f.shape == (1, INPUT_DIM)
    np.testing.assert_array_equal(f[0, 8:], [-1.0, 1.0, 2.0, 3.0])


def test_ensemble_roundtrip(tmp_path):
    ens = ValueEnsemble.random(3)
    path = tmp_path / "v.json"
    ens.save(path)
    back = ValueEnsemble.load(path)
    x = np.random.default_rng(1).normal(size=(4, INPUT_DIM))
    np.testing.assert_array_equal(ens.predict_all(x), back.predict_all(x))
    assert path.read_text() == (back.save(tmp_path / "w.json") or (tmp_path / "w.json").read_text())


def test_ensemble_rejects_other_versions():
    d = ValueEnsemble.random(0).to_dict()
    with pytest.raises(SchemaError):
        ValueEnsemble.from_dict({**d, "version": 99})
    with pytest.raises(SchemaError):
        ValueEnsemble.from_dict({**d, "hidden": [32, 32]})
    with pytest.raises(SchemaError):
        ValueEnsemble(ValueEnsemble.random(0).networks[:3], np.zeros(INPUT_DIM), np.ones(INPUT_DIM))


def test_predict_mean_and_spread():
    ens = ValueEnsemble.random(0)
    mean, std = ens.predict(neutral_state(), (0.0, 0.3, 0.83))
    assert np.isfinite(mean) and std > 0
    assert ens.predict_all(np.zeros((3, INPUT_DIM))).shape == (N_NETWORKS, 3)


def test_training_reduces_loss(scene):
    cfg = ValueTrainingConfig(iterations=1, rollouts_per_iteration=4, epochs=15)
    ens, report = train_value_ensemble(scene, config=cfg, rng_seed=0, return_report=True)
    assert all(report.decreased())
    again = train_value_ensemble(scene, config=cfg, rng_seed=0)
    x = np.random.default_rng(2).normal(size=(3, INPUT_DIM))
    np.testing.assert_array_equal(ens.predict_all(x), again.predict_all(x))


def test_training_config_validation():
    with pytest.raises(ValueError):
        ValueTrainingConfig(discount=1.5)
    with pytest.raises(ValueError):
        ValueTrainingConfig(window=0)
