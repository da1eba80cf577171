"""Ensemble of small MLPs estimating the planner's return-to-go.

Each network maps (normalized joint vector, hand sign, goal position) to a
scalar. The ensemble mean is added to MPPI rollout returns at the horizon
end; the spread across networks is reported as disagreement.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import NumericError, SceneSpec, SchemaError
from .kinematics import NDOF, KinematicState, neutral_state
from .optim import AdamConfig, AdamState
from .planner import PlannerParams, derive_seed, plan

N_NETWORKS = 5
HIDDEN = (64, 64)
INPUT_DIM = NDOF + 1 + 3
FORMAT_VERSION = 1


@dataclass
class MLP:
    """Two tanh hidden layers and a linear scalar output."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def __post_init__(self):
        shapes = [w.shape for w in self.weights]
        expected = [(INPUT_DIM, HIDDEN[0]), (HIDDEN[0], HIDDEN[1]), (HIDDEN[1], 1)]
        if shapes != expected or [b.shape for b in self.biases] != [(s[1],) for s in expected]:
            raise SchemaError(f"MLP layer shapes {shapes} differ from {expected}")

    @classmethod
    def init(cls, rng: np.random.Generator) -> "MLP":
        dims = (INPUT_DIM, *HIDDEN, 1)
        ws = [rng.normal(0.0, 1.0 / math.sqrt(dims[i]), (dims[i], dims[i + 1])) for i in range(3)]
        return cls(ws, [np.zeros(d) for d in dims[1:]])

    def forward(self, x: np.ndarray) -> np.ndarray:
        h1 = np.tanh(x @ self.weights[0] + self.biases[0])
        h2 = np.tanh(h1 @ self.weights[1] + self.biases[1])
        return (h2 @ self.weights[2] + self.biases[2])[:, 0]

    def loss_and_grads(self, x: np.ndarray, y: np.ndarray):
        """Mean squared error and its gradients (weights then biases)."""
        w, b = self.weights, self.biases
        h1 = np.tanh(x @ w[0] + b[0])
        h2 = np.tanh(h1 @ w[1] + b[1])
        out = (h2 @ w[2] + b[2])[:, 0]
        r = out - y
        n = len(y)
        d3 = (2.0 / n) * r[:, None]
        gw2, gb2 = h2.T @ d3, d3.sum(axis=0)
        d2 = (d3 @ w[2].T) * (1 - h2 * h2)
        gw1, gb1 = h1.T @ d2, d2.sum(axis=0)
        d1 = (d2 @ w[1].T) * (1 - h1 * h1)
        gw0, gb0 = x.T @ d1, d1.sum(axis=0)
        return float(np.mean(r * r)), [gw0, gw1, gw2], [gb0, gb1, gb2]

    def parameters(self) -> list[np.ndarray]:
        return [*self.weights, *self.biases]


@dataclass
class ValueEnsemble:
    networks: list[MLP]
    input_mean: np.ndarray
    input_std: np.ndarray
    output_mean: float = 0.0
    output_std: float = 1.0

    def __post_init__(self):
        if len(self.networks) != N_NETWORKS:
            raise SchemaError(f"ensemble must hold exactly {N_NETWORKS} networks")
        self.input_mean = np.asarray(self.input_mean, dtype=float)
        self.input_std = np.asarray(self.input_std, dtype=float)
        if self.input_mean.shape != (INPUT_DIM,) or self.input_std.shape != (INPUT_DIM,):
            raise SchemaError("normalization constants have the wrong length")
        if np.any(self.input_std <= 0) or not self.output_std > 0:
            raise SchemaError("normalization scales must be positive")

    @classmethod
    def random(cls, rng_seed: int = 0) -> "ValueEnsemble":
        nets = [MLP.init(np.random.default_rng(derive_seed(rng_seed, 1, i))) for i in range(N_NETWORKS)]
        return cls(nets, np.zeros(INPUT_DIM), np.ones(INPUT_DIM))

    def _normalize(self, x: np.ndarray) -> np.ndarray:
        return (x - self.input_mean) / self.input_std

    def predict_all(self, x: np.ndarray) -> np.ndarray:
        """(N_NETWORKS, n) predictions in return units for raw inputs."""
        z = self._normalize(np.atleast_2d(x))
        return np.stack([net.forward(z) for net in self.networks]) * self.output_std + self.output_mean

    def predict_states(self, q: np.ndarray, hand_sign: float, goal_pos) -> np.ndarray:
        """Ensemble-mean value for each row of the joint matrix ``q``."""
        return self.predict_all(features(q, hand_sign, goal_pos)).mean(axis=0)

    def predict(self, state: KinematicState, goal_pos) -> tuple[float, float]:
        """(mean, std across networks) for one state."""
        p = self.predict_all(features(state.vector()[None], state.hand_sign, goal_pos))[:, 0]
        return float(p.mean()), float(p.std())

    def to_dict(self) -> dict:
        nets = []
        for net in self.networks:
            nets.append({"layers": [
                {"shape": list(w.shape), "weights": w.ravel().tolist(), "bias": b.tolist()}
                for w, b in zip(net.weights, net.biases)
            ]})
        return {
            "format": "reachintent-value-ensemble",
            "version": FORMAT_VERSION,
            "input_dim": INPUT_DIM,
            "hidden": list(HIDDEN),
            "activation": "tanh",
            "input_mean": self.input_mean.tolist(),
            "input_std": self.input_std.tolist(),
            "output_mean": self.output_mean,
            "output_std": self.output_std,
            "networks": nets,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ValueEnsemble":
        if d.get("version") != FORMAT_VERSION:
            raise SchemaError(f"unsupported value-ensemble version {d.get('version')!r}", where="version")
        if d.get("activation") != "tanh" or list(d.get("hidden", [])) != list(HIDDEN):
            raise SchemaError("architecture must be 2x64 tanh", where="hidden")
        nets = []
        for i, nd in enumerate(d["networks"]):
            ws, bs = [], []
            for layer in nd["layers"]:
                ws.append(np.asarray(layer["weights"], dtype=float).reshape(layer["shape"]))
                bs.append(np.asarray(layer["bias"], dtype=float))
            nets.append(MLP(ws, bs))
        return cls(nets, d["input_mean"], d["input_std"], float(d["output_mean"]), float(d["output_std"]))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "ValueEnsemble":
        return cls.from_dict(json.loads(Path(path).read_text()))


def features(q: np.ndarray, hand_sign: float, goal_pos) -> np.ndarray:
    q = np.atleast_2d(np.asarray(q, dtype=float))
    n = len(q)
    return np.hstack([q, np.full((n, 1), float(hand_sign)), np.tile(np.asarray(goal_pos, float), (n, 1))])


@dataclass(frozen=True)
class ValueTrainingConfig:
    """``window`` is the number of planner steps whose discounted utility
    forms one Monte-Carlo return."""

    iterations: int = 4
    rollouts_per_iteration: int = 24
    window: int = 20
    discount: float = 0.95
    epochs: int = 60
    batch_size: int = 64
    learning_rate: float = 3e-3
    start_jitter: float = 0.3
    goal_jitter: float = 0.05

    def __post_init__(self):
        if self.iterations < 0 or self.rollouts_per_iteration < 1 or self.window < 1:
            raise ValueError("invalid training sizes")
        if not 0 < self.discount <= 1 or self.learning_rate < 0:
            raise ValueError("invalid discount or learning rate")


@dataclass
class TrainingReport:
    """Per-network training loss (normalized units) at the first and last
    epoch of every iteration."""

    losses: list[list[tuple[float, float]]]

    def decreased(self) -> list[bool]:
        return [l[0][0] > l[-1][1] for l in self.losses] if self.losses and self.losses[0] else []


def random_start(scene: SceneSpec, rng: np.random.Generator, jitter: float, hand: str = "right") -> KinematicState:
    body = scene.body
    q = neutral_state(hand).vector()
    q[2:] += rng.uniform(-jitter, jitter, NDOF - 2)
    q[:2] += rng.uniform(-0.05, 0.05, 2)
    q = np.clip(q, body.lower(), body.upper())
    return KinematicState.from_vector(q, None, 0.0, hand)


def random_goal(scene: SceneSpec, rng: np.random.Generator, jitter: float):
    from .core import TargetSpec

    t = scene.targets[int(rng.integers(len(scene.targets)))]
    return TargetSpec(t.id, np.asarray(t.position) + rng.uniform(-jitter, jitter, 3) * (1, 1, 0))


def collect_returns(scene: SceneSpec, params: PlannerParams, cfg: ValueTrainingConfig,
                    n_rollouts: int, rng_seed, value: ValueEnsemble | None = None):
    """Inputs and discounted ``window``-step returns from randomized rollouts.

    Every state visited in the first ``window`` steps of a ``2 * window``
    step plan contributes one sample; plans that stop early are padded with
    their last utility (the goal is held).
    """
    xs, ys = [], []
    disc = cfg.discount ** np.arange(cfg.window)
    for r in range(n_rollouts):
        rng = np.random.default_rng(derive_seed(rng_seed, r))
        start = random_start(scene, rng, cfg.start_jitter)
        goal = random_goal(scene, rng, cfg.goal_jitter)
        ro = plan(goal, scene, start, params, value, int(rng.integers(2**31)), max_steps=2 * cfg.window)
        u = np.asarray(ro.per_step_utility, dtype=float)
        if len(u) == 0:
            continue
        u = np.concatenate([u, np.full(2 * cfg.window - len(u), u[-1])]) if len(u) < 2 * cfg.window else u
        for t in range(min(cfg.window, len(ro.states))):
            xs.append(features(ro.states[t].vector()[None], start.hand_sign, goal.position)[0])
            ys.append(float(disc @ u[t : t + cfg.window]))
    return np.array(xs), np.array(ys)


def train_value_ensemble(scene: SceneSpec, params: PlannerParams | None = None,
                         config: ValueTrainingConfig | None = None, rng_seed: int = 0,
                         return_report: bool = False):
    """Fit the ensemble to Monte-Carlo returns of MPPI rollouts.

    Each iteration gathers rollouts (planning with the current ensemble
    after the first iteration), appends them to the data set, and trains
    every network on its own bootstrap resample with Adam.
    """
    params = params or PlannerParams()
    cfg = config or ValueTrainingConfig()
    ens = ValueEnsemble.random(rng_seed)
    losses: list[list[tuple[float, float]]] = [[] for _ in range(N_NETWORKS)]
    if cfg.iterations == 0:
        return (ens, TrainingReport(losses)) if return_report else ens
    X = np.empty((0, INPUT_DIM))
    Y = np.empty(0)
    opts = [AdamState(AdamConfig(lr=cfg.learning_rate)) for _ in range(N_NETWORKS)]
    for it in range(cfg.iterations):
        x, y = collect_returns(scene, params, cfg, cfg.rollouts_per_iteration,
                               derive_seed(rng_seed, 2, it).generate_state(1)[0],
                               ens if it > 0 else None)
        X, Y = np.vstack([X, x]), np.concatenate([Y, y])
        if it == 0:
            ens.input_mean = X.mean(axis=0)
            ens.input_std = np.where(X.std(axis=0) > 1e-8, X.std(axis=0), 1.0)
            ens.output_mean = float(Y.mean())
            ens.output_std = float(Y.std()) if Y.std() > 1e-8 else 1.0
        Z = ens._normalize(X)
        T = (Y - ens.output_mean) / ens.output_std
        for k, net in enumerate(ens.networks):
            rng = np.random.default_rng(derive_seed(rng_seed, 3, it, k))
            idx = rng.integers(0, len(Z), len(Z))
            first = last = math.nan
            for ep in range(cfg.epochs):
                perm = idx[rng.permutation(len(idx))]
                tot = 0.0
                for s in range(0, len(perm), cfg.batch_size):
                    b = perm[s : s + cfg.batch_size]
                    loss, gw, gb = net.loss_and_grads(Z[b], T[b])
                    if not math.isfinite(loss):
                        raise NumericError(f"value network {k} diverged at iteration {it}")
                    opts[k].update(net.parameters(), gw + gb)
                    tot += loss * len(b)
                ep_loss = tot / len(perm)
                if ep == 0:
                    first = ep_loss
                last = ep_loss
            losses[k].append((first, last))
    return (ens, TrainingReport(losses)) if return_report else ens
