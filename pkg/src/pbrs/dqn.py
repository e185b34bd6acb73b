"""A small numpy DQN: feed-forward Q-network, replay buffer, target network, Adam.

Defaults follow the usual DQN reference settings (two hidden layers of 64
rectified units, one gradient step every 4 environment steps, gradient-norm
clipping at 10) with the replay/exploration/learning-rate values used for
the shaping experiments.
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .core import TerminationKind
from .curves import LearningCurve
from .errors import ConfigurationError, ContractViolation, NumericFault
from .rng import RngStream
from .shaping import PotentialSpec


class MLPQNet:
    """Affine layers with rectified-linear hidden activations.

    Weights are stored ``(fan_in, fan_out)`` so a batch row-vector ``x`` maps
    to ``x @ W + b``.
    """

    def __init__(self, sizes: Sequence[int], params: Optional[list[np.ndarray]] = None):
        if len(sizes) < 2:
            raise ConfigurationError("need at least input and output sizes")
        self.sizes = tuple(int(n) for n in sizes)
        if params is None:
            params = []
            for fan_in, fan_out in zip(self.sizes[:-1], self.sizes[1:]):
                params += [np.zeros((fan_in, fan_out)), np.zeros(fan_out)]
        self.params = params

    @classmethod
    def initialized(cls, sizes: Sequence[int], rng: RngStream) -> "MLPQNet":
        """Uniform ``(-1/sqrt(fan_in), 1/sqrt(fan_in))`` init for weights and biases."""
        net = cls(sizes)
        for W, b in zip(net.params[::2], net.params[1::2]):
            bound = 1.0 / math.sqrt(W.shape[0])
            W.flat[:] = [rng.uniform(-bound, bound) for _ in range(W.size)]
            b[:] = [rng.uniform(-bound, bound) for _ in range(b.size)]
        return net

    @property
    def n_layers(self) -> int:
        return len(self.params) // 2

    @property
    def n_params(self) -> int:
        return sum(p.size for p in self.params)

    def copy(self) -> "MLPQNet":
        return MLPQNet(self.sizes, [p.copy() for p in self.params])

    def get_flat(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.params])

    def set_flat(self, flat: np.ndarray) -> None:
        i = 0
        for p in self.params:
            p.flat[:] = flat[i:i + p.size]
            i += p.size

    def _check(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.sizes[0]:
            raise ContractViolation(
                f"observation has {x.shape[-1]} features, network expects {self.sizes[0]}")
        return x

    def forward(self, x) -> np.ndarray:
        h = self._check(x)
        last = self.n_layers - 1
        for i in range(self.n_layers):
            h = h @ self.params[2 * i] + self.params[2 * i + 1]
            if i < last:
                h = np.maximum(h, 0.0)
        return h

    def forward_cached(self, x) -> tuple[np.ndarray, list[np.ndarray]]:
        """Forward pass keeping each layer's input for :meth:`backward`."""
        h = self._check(x)
        if h.ndim == 1:
            h = h[None, :]
        inputs = []
        last = self.n_layers - 1
        for i in range(self.n_layers):
            inputs.append(h)
            h = h @ self.params[2 * i] + self.params[2 * i + 1]
            if i < last:
                h = np.maximum(h, 0.0)
        return h, inputs

    def backward(self, inputs: list[np.ndarray], d_out: np.ndarray) -> list[np.ndarray]:
        grads: list[np.ndarray] = [None] * len(self.params)  # type: ignore[list-item]
        delta = d_out
        for i in reversed(range(self.n_layers)):
            x = inputs[i]
            grads[2 * i] = x.T @ delta
            grads[2 * i + 1] = delta.sum(axis=0)
            if i > 0:
                # Post-activation input > 0 exactly where the rectifier was active.
                delta = (delta @ self.params[2 * i].T) * (x > 0)
        return grads


class Batch(NamedTuple):
    obs: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_obs: np.ndarray
    terminal: np.ndarray


def td_loss(net: MLPQNet, target_net: MLPQNet, batch: Batch, gamma: float,
            loss: str = "mse") -> tuple[float, list[np.ndarray]]:
    """Mean TD loss and its gradient w.r.t. ``net``'s parameters.

    ``loss="mse"`` is the mean squared TD error; ``loss="huber"`` the smooth-L1
    variant (quadratic inside ``|d| < 1``).  Targets
    ``r + gamma * max_a Q_target(s', a)`` drop the bootstrap on terminal
    transitions only.
    """
    n = len(batch.actions)
    if n == 0:
        raise ContractViolation("empty batch")
    q_all, inputs = net.forward_cached(batch.obs)
    rows = np.arange(n)
    q_sa = q_all[rows, batch.actions]
    next_q = target_net.forward(batch.next_obs).max(axis=1)
    y = batch.rewards + gamma * np.where(batch.terminal, 0.0, next_q)
    diff = q_sa - y
    if loss == "mse":
        value = float(np.mean(diff * diff))
        d_q = 2.0 * diff / n
    elif loss == "huber":
        a = np.abs(diff)
        value = float(np.mean(np.where(a < 1.0, 0.5 * diff * diff, a - 0.5)))
        d_q = np.clip(diff, -1.0, 1.0) / n
    else:
        raise ConfigurationError(f"unknown loss {loss!r}")
    if not math.isfinite(value):
        raise NumericFault("non-finite TD loss", loss=value)
    d_out = np.zeros_like(q_all)
    d_out[rows, batch.actions] = d_q
    return value, net.backward(inputs, d_out)


def clip_grad_norm(grads: list[np.ndarray], max_norm: float) -> float:
    total = math.sqrt(sum(float(np.sum(g * g)) for g in grads))
    coef = max_norm / (total + 1e-6)
    if coef < 1.0:
        for g in grads:
            g *= coef
    return total


@dataclass
class Adam:
    params: list[np.ndarray]
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list[np.ndarray] = field(init=False)
    v: list[np.ndarray] = field(init=False)

    def __post_init__(self):
        self.m = [np.zeros_like(p) for p in self.params]
        self.v = [np.zeros_like(p) for p in self.params]

    def step(self, grads: list[np.ndarray]) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


class ReplayBuffer:
    """Ring buffer; rewards are stored already shaped."""

    def __init__(self, capacity: int, obs_dim: int):
        self.capacity = capacity
        self.obs = np.zeros((capacity, obs_dim))
        self.next_obs = np.zeros((capacity, obs_dim))
        self.actions = np.zeros(capacity, dtype=np.intp)
        self.rewards = np.zeros(capacity)
        self.terminal = np.zeros(capacity, dtype=bool)
        self.pos = 0
        self.size = 0

    def __len__(self) -> int:
        return self.size

    def add(self, obs, action: int, reward: float, next_obs, terminal: bool) -> None:
        i = self.pos
        self.obs[i] = obs
        self.actions[i] = action
        self.rewards[i] = reward
        self.next_obs[i] = next_obs
        self.terminal[i] = terminal
        self.pos = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample_indices(self, batch_size: int, rng: RngStream) -> np.ndarray:
        return np.array(rng.choice_distinct(self.size, batch_size), dtype=np.intp)

    def sample(self, batch_size: int, rng: RngStream) -> Batch:
        idx = self.sample_indices(batch_size, rng)
        return Batch(self.obs[idx], self.actions[idx], self.rewards[idx],
                     self.next_obs[idx], self.terminal[idx])


@dataclass(frozen=True)
class DQNConfig:
    lr: float = 1e-4
    batch_size: int = 32
    buffer_size: int = 50_000
    gamma: float = 0.99
    eps_start: float = 1.0
    eps_end: float = 0.05
    eps_decay_steps: int = 10_000
    learning_starts: int = 1_000
    train_freq: int = 4
    grad_steps: int = 1
    target_update_interval: int = 10_000
    hidden: tuple[int, ...] = (64, 64)
    max_grad_norm: float = 10.0
    loss: str = "mse"
    eval_interval: int = 500
    n_eval: int = 5

    def __post_init__(self):
        if not 0 < self.gamma < 1:
            raise ConfigurationError("gamma must lie in (0, 1)")
        if min(self.batch_size, self.buffer_size, self.train_freq, self.grad_steps,
               self.target_update_interval, self.eval_interval) < 1:
            raise ConfigurationError("sizes and intervals must be positive")
        if self.batch_size > self.buffer_size:
            raise ConfigurationError("batch larger than the buffer")

    def epsilon(self, step: int) -> float:
        """Linear decay from ``eps_start`` to ``eps_end`` over ``eps_decay_steps``."""
        frac = min(step / self.eps_decay_steps, 1.0)
        return self.eps_start + frac * (self.eps_end - self.eps_start)


def greedy_action(net: MLPQNet, obs) -> int:
    return int(np.argmax(net.forward(obs)))


def evaluate_greedy(net: MLPQNet, env, n_episodes: int, rng: RngStream) -> tuple[float, float]:
    lengths, returns = [], []
    for _ in range(n_episodes):
        obs = env.reset(rng)
        total, n = 0.0, 0
        while True:
            t = env.step(greedy_action(net, obs))
            total += t.r
            n += 1
            if t.ends_episode:
                break
            obs = t.s_next
        lengths.append(n)
        returns.append(total)
    return float(np.mean(lengths)), float(np.mean(returns))


def train_dqn(env, spec: Optional[PotentialSpec], config: DQNConfig, total_steps: int,
              rng: RngStream, run_info: Optional[dict] = None) -> tuple[MLPQNet, LearningCurve]:
    """Standard DQN loop; shaping is applied once, when a transition is stored."""
    if spec is not None and abs(spec.gamma - config.gamma) > 1e-15:
        raise ConfigurationError("potential gamma must match the DQN gamma")
    eval_env = copy.deepcopy(env)
    net = MLPQNet.initialized((env.obs_dim, *config.hidden, env.n_actions), rng.spawn("init"))
    target = net.copy()
    opt = Adam(net.params, lr=config.lr)
    buffer = ReplayBuffer(config.buffer_size, env.obs_dim)
    explore_rng, env_rng = rng.spawn("explore"), rng.spawn("env")
    replay_rng, eval_rng = rng.spawn("replay"), rng.spawn("eval")

    steps, lengths, returns = [], [], []
    obs = env.reset(env_rng)
    for step in range(1, total_steps + 1):
        if explore_rng.random() < config.epsilon(step - 1):
            a = explore_rng.integers(env.n_actions)
        else:
            a = greedy_action(net, obs)
        t = env.step(a)
        r = t.r
        if spec is not None:
            ends = t.kind is not TerminationKind.NON_TERMINAL
            r = r + (spec.gamma * spec(t.s_next, ends) - spec.phi(t.s))
        buffer.add(obs, a, r, t.s_next, t.kind is TerminationKind.TERMINAL)
        obs = env.reset(env_rng) if t.ends_episode else t.s_next

        if step > config.learning_starts and step % config.train_freq == 0:
            for _ in range(config.grad_steps):
                batch = buffer.sample(config.batch_size, replay_rng)
                try:
                    _, grads = td_loss(net, target, batch, config.gamma, config.loss)
                except NumericFault as exc:
                    exc.metadata.update(run_info or {}, step=step)
                    raise
                clip_grad_norm(grads, config.max_grad_norm)
                opt.step(grads)
        if step % config.target_update_interval == 0:
            target = net.copy()
        if step % config.eval_interval == 0 and config.n_eval > 0:
            length, ret = evaluate_greedy(net, eval_env, config.n_eval, eval_rng)
            steps.append(step)
            lengths.append(length)
            returns.append(ret)
    return net, LearningCurve.single_run(steps, lengths, returns)


def probe_q_range(net: MLPQNet, env, n: int, rng: RngStream) -> tuple[float, float]:
    """Min and max Q-values over ``n`` randomly sampled valid states."""
    states = np.array([env.sample_state(rng) for _ in range(n)])
    q = net.forward(states)
    return float(q.min()), float(q.max())


# -- Checkpoints ---------------------------------------------------------------------
#
# One JSON header line, then the parameters as raw little-endian float64 in
# layer order (W1, b1, W2, b2, ...), each C-contiguous.

CHECKPOINT_FORMAT = "pbrs-mlpq-v1"


def save_checkpoint(net: MLPQNet, path) -> None:
    header = {"format": CHECKPOINT_FORMAT, "dtype": "<f8", "sizes": list(net.sizes),
              "shapes": [list(p.shape) for p in net.params]}
    with open(path, "wb") as fh:
        fh.write((json.dumps(header) + "\n").encode("ascii"))
        for p in net.params:
            fh.write(np.ascontiguousarray(p, dtype="<f8").tobytes())


def load_checkpoint(path) -> MLPQNet:
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode("ascii"))
        if header.get("format") != CHECKPOINT_FORMAT:
            raise ValueError(f"not a {CHECKPOINT_FORMAT} checkpoint")
        params = []
        for shape in header["shapes"]:
            count = int(np.prod(shape))
            data = np.frombuffer(fh.read(8 * count), dtype="<f8")
            params.append(data.reshape(shape).astype(float))
    return MLPQNet(header["sizes"], params)


class DQNAgent(BaseEstimator):
    """Estimator wrapper around :func:`train_dqn`."""

    def __init__(self, potential: Optional[PotentialSpec] = None, total_steps: int = 60_000,
                 lr: float = 1e-4, batch_size: int = 32, buffer_size: int = 50_000,
                 gamma: float = 0.99, eps_decay_steps: int = 10_000,
                 learning_starts: int = 1_000, train_freq: int = 4,
                 target_update_interval: int = 10_000, eval_interval: int = 500,
                 n_eval: int = 5, seed: int = 0):
        self.potential = potential
        self.total_steps = total_steps
        self.lr = lr
        self.batch_size = batch_size
        self.buffer_size = buffer_size
        self.gamma = gamma
        self.eps_decay_steps = eps_decay_steps
        self.learning_starts = learning_starts
        self.train_freq = train_freq
        self.target_update_interval = target_update_interval
        self.eval_interval = eval_interval
        self.n_eval = n_eval
        self.seed = seed

    def fit(self, env, y=None):
        config = DQNConfig(lr=self.lr, batch_size=self.batch_size,
                           buffer_size=self.buffer_size, gamma=self.gamma,
                           eps_decay_steps=self.eps_decay_steps,
                           learning_starts=self.learning_starts, train_freq=self.train_freq,
                           target_update_interval=self.target_update_interval,
                           eval_interval=self.eval_interval, n_eval=self.n_eval)
        self.net_, self.learning_curve_ = train_dqn(
            env, self.potential, config, self.total_steps, RngStream(self.seed))
        self.n_features_in_ = env.obs_dim
        return self

    def decision_function(self, X) -> np.ndarray:
        check_is_fitted(self, "net_")
        X = check_array(X, ensure_2d=True)
        return self.net_.forward(X)

    def predict(self, X) -> np.ndarray:
        return self.decision_function(X).argmax(axis=1)
