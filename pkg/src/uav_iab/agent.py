"""Deep Q-learning over the UAV configuration grid.

The Q-network is a small numpy MLP (4 -> 64 -> 64 -> 81, ReLU hidden layers)
trained on the squared Bellman error against a periodically synced target
network. Plain gradient descent is the default; Adam is available through the
``optimizer`` hyperparameter. The environment is a lookup table over
a precomputed dataset, so training never re-runs the simulator.
"""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, fields
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .config import ConfigError, load_yaml_mapping
from .dataset import Bounds, Dataset, DatasetError, canonical_load, normalize, require_complete
from .mdp import N_ACTIONS, N_STATES, UavState, feature_table, state_index, transition_table
from .reward import MetricsVector, RewardWeights, reward

MODEL_FORMAT = "uav_iab-qnet-1"


class NumericError(ArithmeticError):
    """Non-finite parameters or loss."""


@dataclass(frozen=True)
class Hyperparams:
    learning_rate: float = 5e-5
    epsilon_init: float = 1.0
    epsilon_decay: float = 0.995
    epsilon_min: float = 0.05
    gamma: float = 0.9
    batch_size: int = 32
    replay_capacity: int = 2000
    target_sync_every: int = 50
    iterations: int = 1500
    episode_len: int = 100
    hidden: int = 64
    optimizer: str = "sgd"
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        if self.optimizer not in ("sgd", "adam"):
            raise ConfigError(f"optimizer must be sgd or adam, got {self.optimizer!r}")
        if not (0.0 <= self.adam_beta1 < 1.0 and 0.0 <= self.adam_beta2 < 1.0 and self.adam_eps > 0):
            raise ConfigError("adam_beta1/adam_beta2 must lie in [0, 1) and adam_eps must be positive")
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be positive")
        for name in ("epsilon_init", "epsilon_min"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1]")
        if not 0.0 < self.epsilon_decay <= 1.0:
            raise ConfigError("epsilon_decay must lie in (0, 1]")
        if not 0.0 <= self.gamma < 1.0:
            raise ConfigError("gamma must lie in [0, 1)")
        for name in ("batch_size", "replay_capacity", "target_sync_every", "episode_len", "hidden"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.iterations < 0:
            raise ConfigError("iterations must be >= 0")

    def epsilon(self, t: int) -> float:
        return max(self.epsilon_min, self.epsilon_init * self.epsilon_decay ** t)


def load_hyperparams(path: str | Path | None) -> Hyperparams:
    if path is None:
        return Hyperparams()
    data = load_yaml_mapping(path)
    known = {f.name: f.type for f in fields(Hyperparams)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise ConfigError(f"unknown hyperparameter keys: {', '.join(unknown)}")
    try:
        cast = {"int": int, "float": float, "str": str}
        return Hyperparams(**{k: cast[known[k]](v) for k, v in data.items()})
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad hyperparameter value: {exc}") from exc


@dataclass(frozen=True)
class QParams:
    weights: tuple[np.ndarray, ...]   # (in, out) matrices
    biases: tuple[np.ndarray, ...]

    @property
    def dims(self) -> tuple[int, ...]:
        return (self.weights[0].shape[0],) + tuple(w.shape[1] for w in self.weights)

    def check_finite(self):
        for arr in self.weights + self.biases:
            if not np.all(np.isfinite(arr)):
                raise NumericError("non-finite Q-network parameters")

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for pair in zip(self.weights, self.biases) for a in pair])

    def with_flat(self, vector: np.ndarray) -> "QParams":
        weights, biases, pos = [], [], 0
        for w, b in zip(self.weights, self.biases):
            weights.append(vector[pos:pos + w.size].reshape(w.shape))
            pos += w.size
            biases.append(vector[pos:pos + b.size].reshape(b.shape))
            pos += b.size
        return QParams(tuple(weights), tuple(biases))

    def __eq__(self, other):
        return (isinstance(other, QParams) and self.dims == other.dims
                and all(np.array_equal(a, b) for a, b in zip(self.weights + self.biases,
                                                            other.weights + other.biases)))


def init_params(rng: np.random.Generator, dims=(4, 64, 64, N_ACTIONS)) -> QParams:
    """He-uniform hidden layers, small uniform output layer, zero biases."""
    weights, biases = [], []
    for k, (fan_in, fan_out) in enumerate(zip(dims[:-1], dims[1:])):
        last = k == len(dims) - 2
        limit = math.sqrt(6.0 / fan_in) * (0.1 if last else 1.0)
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return QParams(tuple(weights), tuple(biases))


def zero_params(dims=(4, 64, 64, N_ACTIONS)) -> QParams:
    return QParams(tuple(np.zeros((i, o)) for i, o in zip(dims[:-1], dims[1:])),
                   tuple(np.zeros(o) for o in dims[1:]))


def _forward(p: QParams, x: np.ndarray):
    activations = [x]
    h = x
    last = len(p.weights) - 1
    for k, (w, b) in enumerate(zip(p.weights, p.biases)):
        z = h @ w + b
        h = z if k == last else np.maximum(z, 0.0)
        activations.append(h)
    return h, activations


def q_forward(p: QParams, state) -> np.ndarray:
    """Action values for a UavState, a state index, or a feature batch of shape (n, 4)."""
    if isinstance(state, UavState):
        x = feature_table()[state_index(state)]
    elif isinstance(state, (int, np.integer)):
        x = feature_table()[int(state)]
    else:
        x = np.asarray(state, dtype=float)
    out, _ = _forward(p, x)
    if not np.all(np.isfinite(out)):
        raise NumericError("non-finite Q-values; parameters may have diverged")
    return out


class ReplayTuple(NamedTuple):
    """One transition; states and actions are stored as grid/action indices."""

    s: int
    a: int
    r: float
    s_next: int


class ReplayBuffer:
    """Capacity-bounded FIFO of transitions."""

    def __init__(self, capacity: int):
        self.capacity = int(capacity)
        self._items: deque[ReplayTuple] = deque(maxlen=self.capacity)

    def __len__(self):
        return len(self._items)

    def push(self, item: ReplayTuple):
        if not 0.0 <= item.r <= 1.0:
            raise ValueError(f"reward {item.r} outside [0, 1]")
        self._items.append(item)

    def sample(self, n: int, rng: np.random.Generator) -> list[ReplayTuple]:
        n = min(int(n), len(self._items))
        picks = rng.choice(len(self._items), size=n, replace=False)
        return [self._items[i] for i in picks]


def _batch_arrays(batch):
    arr = np.array([(t.s, t.a, t.r, t.s_next) for t in batch], dtype=float)
    return arr[:, 0].astype(np.int64), arr[:, 1].astype(np.int64), arr[:, 2], arr[:, 3].astype(np.int64)


def bellman_targets(target_p: QParams, rewards: np.ndarray, next_states: np.ndarray, gamma: float):
    q_next, _ = _forward(target_p, feature_table()[next_states])
    return rewards + gamma * q_next.max(axis=1)


def loss_and_grad(p: QParams, features: np.ndarray, actions: np.ndarray, targets: np.ndarray):
    """Mean squared error of the taken actions' Q-values and its gradient."""
    out, acts = _forward(p, features)
    n = len(actions)
    rows = np.arange(n)
    err = out[rows, actions] - targets
    loss = float(np.mean(err ** 2))
    delta = np.zeros_like(out)
    delta[rows, actions] = 2.0 * err / n
    grads_w, grads_b = [None] * len(p.weights), [None] * len(p.weights)
    for k in range(len(p.weights) - 1, -1, -1):
        grads_w[k] = acts[k].T @ delta
        grads_b[k] = delta.sum(axis=0)
        if k:
            delta = (delta @ p.weights[k].T) * (acts[k] > 0.0)
    return loss, QParams(tuple(grads_w), tuple(grads_b))


class Adam:
    """Adam moment estimates for one parameter set; ``step`` returns new parameters."""

    def __init__(self, hyper: Hyperparams):
        self.hyper = hyper
        self.t = 0
        self.m: list[np.ndarray] | None = None
        self.v: list[np.ndarray] | None = None

    def step(self, p: QParams, grad: QParams) -> QParams:
        h = self.hyper
        params = list(p.weights + p.biases)
        grads = list(grad.weights + grad.biases)
        if self.m is None:
            self.m = [np.zeros_like(g) for g in grads]
            self.v = [np.zeros_like(g) for g in grads]
        self.t += 1
        c1 = 1.0 - h.adam_beta1 ** self.t
        c2 = 1.0 - h.adam_beta2 ** self.t
        out = []
        for k, (x, g) in enumerate(zip(params, grads)):
            self.m[k] = h.adam_beta1 * self.m[k] + (1.0 - h.adam_beta1) * g
            self.v[k] = h.adam_beta2 * self.v[k] + (1.0 - h.adam_beta2) * g * g
            out.append(x - h.learning_rate * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + h.adam_eps))
        n = len(p.weights)
        return QParams(tuple(out[:n]), tuple(out[n:]))


def make_optimizer(hyper: Hyperparams) -> Adam | None:
    return Adam(hyper) if hyper.optimizer == "adam" else None


def train_step(p: QParams, target_p: QParams, batch, hyper: Hyperparams,
               optimizer: Adam | None = None) -> tuple[QParams, float]:
    """One update on a replay batch; returns the updated parameters and the pre-step loss.

    Without ``optimizer`` this is plain gradient descent with ``hyper.learning_rate``.
    """
    if len(batch) == 0:
        raise ValueError("empty batch")
    s, a, r, s_next = _batch_arrays(batch)
    with np.errstate(over="ignore", invalid="ignore"):
        targets = bellman_targets(target_p, r, s_next, hyper.gamma)
        loss, grad = loss_and_grad(p, feature_table()[s], a, targets)
    if not math.isfinite(loss):
        raise NumericError(f"non-finite loss {loss} (learning_rate={hyper.learning_rate}, "
                           f"max |target|={np.max(np.abs(targets)):.3g})")
    if optimizer is not None:
        new = optimizer.step(p, grad)
    else:
        lr = hyper.learning_rate
        new = QParams(tuple(w - lr * g for w, g in zip(p.weights, grad.weights)),
                      tuple(b - lr * g for b, g in zip(p.biases, grad.biases)))
    return new, loss


def select_action(qvals: np.ndarray, epsilon: float, rng: np.random.Generator) -> int:
    """Uniform random action with probability epsilon, else the lowest-index argmax."""
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError(f"epsilon {epsilon} outside [0, 1]")
    if epsilon > 0.0 and rng.random() < epsilon:
        return int(rng.integers(N_ACTIONS))
    return int(np.argmax(qvals))


class EnvironmentDataError(RuntimeError):
    """Dataset cannot back the environment (e.g. missing states)."""


class DatasetEnv:
    """Table-backed environment for one load scenario."""

    def __init__(self, dataset: Dataset, load: str, bounds: Bounds,
                 weights: RewardWeights = RewardWeights()):
        self.load = canonical_load(load)
        try:
            require_complete(dataset, self.load)
        except DatasetError as exc:
            raise EnvironmentDataError(str(exc)) from exc
        table = dataset.for_load(self.load)
        self.weights = weights
        self.raw = np.array([table[i].metrics.values() for i in range(N_STATES)])
        self.normalized = [normalize(table[i].metrics, bounds, self.load) for i in range(N_STATES)]
        self.rewards = np.array([reward(m, weights) for m in self.normalized])
        self.transitions = transition_table()

    def step(self, s: int, a: int) -> tuple[int, float]:
        nxt = int(self.transitions[s, a])
        return nxt, float(self.rewards[nxt])


@dataclass(frozen=True)
class TraceRow:
    iteration: int
    epsilon: float
    reward: float
    loss: float


def train(env: DatasetEnv, hyper: Hyperparams = Hyperparams(), seed: int = 0,
          params: QParams | None = None) -> tuple[QParams, list[TraceRow]]:
    """Run ``hyper.iterations`` environment steps with replay and a target network."""
    rng = np.random.default_rng(np.random.SeedSequence([int(seed) & (2**64 - 1), 0xD01]))
    dims = (4, hyper.hidden, hyper.hidden, N_ACTIONS)
    if params is None:
        params = init_params(rng, dims)
    target = params
    optimizer = make_optimizer(hyper)
    buffer = ReplayBuffer(hyper.replay_capacity)
    features = feature_table()
    trace: list[TraceRow] = []
    state = 0
    for t in range(hyper.iterations):
        if t % hyper.episode_len == 0:
            state = int(rng.integers(N_STATES))
        eps = hyper.epsilon(t)
        action = select_action(q_forward(params, features[state]), eps, rng)
        nxt, r = env.step(state, action)
        buffer.push(ReplayTuple(state, action, r, nxt))
        loss = float("nan")
        if len(buffer) >= hyper.batch_size:
            params, loss = train_step(params, target, buffer.sample(hyper.batch_size, rng), hyper,
                                      optimizer)
        if (t + 1) % hyper.target_sync_every == 0:
            target = params
        trace.append(TraceRow(t, eps, r, loss))
        state = nxt
    params.check_finite()
    return params, trace


@dataclass(frozen=True)
class EvalRecord:
    metrics: MetricsVector      # raw metrics averaged over visited states
    reward: float
    states: tuple[int, ...]     # visited state indices
    rewards: tuple[float, ...]


def greedy_rollout(policy, env: DatasetEnv, episode_len: int, start: int) -> list[int]:
    """States visited after each of ``episode_len`` greedy steps; ``policy`` maps a state index to an action."""
    visited, s = [], int(start)
    for _ in range(episode_len):
        s, _ = env.step(s, policy(s))
        visited.append(s)
    return visited


def evaluate_policy(p: QParams, env: DatasetEnv, episode_len: int = 100, start_state=0) -> EvalRecord:
    if isinstance(start_state, UavState):
        start_state = state_index(start_state)
    greedy = np.argmax(q_forward(p, feature_table()), axis=1)
    visited = greedy_rollout(lambda s: int(greedy[s]), env, episode_len, start_state)
    return summarize_visits(env, visited)


def summarize_visits(env: DatasetEnv, visited) -> EvalRecord:
    idx = np.asarray(visited, dtype=np.int64)
    mean = env.raw[idx].mean(axis=0)
    rewards = env.rewards[idx]
    return EvalRecord(MetricsVector(*(float(v) for v in mean)), float(rewards.mean()),
                      tuple(int(i) for i in idx), tuple(float(r) for r in rewards))


def _array_text(a: np.ndarray) -> str:
    if a.ndim == 1:
        return "[" + ", ".join(format(float(v), ".17g") for v in a) + "]"
    return "[" + ",\n    ".join(_array_text(row) for row in a) + "]"


def save_params(p: QParams, path: str | Path, load: str | None = None) -> None:
    """Write architecture, load scenario and row-major arrays at 17 significant digits."""
    layers = ",\n  ".join(
        f'{{"weight": {_array_text(w)},\n   "bias": {_array_text(b)}}}' for w, b in zip(p.weights, p.biases))
    meta = json.dumps({"format": MODEL_FORMAT, "dims": list(p.dims), "load": load})
    text = meta[:-1] + f',\n "layers": [\n  {layers}]}}\n'
    Path(path).write_text(text)


def load_params(path: str | Path) -> tuple[QParams, str | None]:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ValueError(f"cannot read model {path}: {exc}") from exc
    if data.get("format") != MODEL_FORMAT:
        raise ValueError(f"{path}: not a {MODEL_FORMAT} model file")
    weights = tuple(np.array(layer["weight"], dtype=float) for layer in data["layers"])
    biases = tuple(np.array(layer["bias"], dtype=float) for layer in data["layers"])
    p = QParams(weights, biases)
    if list(p.dims) != list(data["dims"]):
        raise ValueError(f"{path}: layer shapes do not match dims {data['dims']}")
    p.check_finite()
    return p, data.get("load")


def policy_table(p: QParams) -> np.ndarray:
    return np.argmax(q_forward(p, feature_table()), axis=1)

