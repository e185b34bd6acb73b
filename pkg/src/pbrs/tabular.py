"""Tabular Q-learning with uniform Q-initialization and epsilon-greedy exploration."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .core import TerminationKind, Transition, format_float
from .curves import LearningCurve
from .errors import ConfigurationError
from .rng import RngStream
from .shaping import PotentialSpec, potential_table

# Entries within this distance of the row maximum count as tied maximizers.
TIE_TOLERANCE = 1e-10


@dataclass(frozen=True)
class QLearnConfig:
    alpha: float = 0.1
    epsilon: float = 0.05
    gamma: float = 0.95
    train_steps: int = 40_000
    q_init: float = 0.0
    eval_interval: int = 250
    n_eval: int = 10
    eval_epsilon: float = 0.05
    # Bootstrap from max_a Q(s', a) when the step cap ends an episode.
    truncation_bootstrap: bool = True

    def __post_init__(self):
        if not 0 < self.alpha <= 1:
            raise ConfigurationError(f"alpha must lie in (0, 1], got {self.alpha}")
        if not 0 <= self.epsilon <= 1 or not 0 <= self.eval_epsilon <= 1:
            raise ConfigurationError("epsilon must lie in [0, 1]")
        if not 0 < self.gamma < 1:
            raise ConfigurationError(f"gamma must lie in (0, 1), got {self.gamma}")
        if self.train_steps < 1 or self.eval_interval < 1 or self.n_eval < 0:
            raise ConfigurationError("step counts must be positive")


class QTable:
    def __init__(self, values: np.ndarray, q_init: float):
        self.values = np.asarray(values, dtype=float)
        self.q_init = q_init

    @classmethod
    def uniform(cls, n_states: int, n_actions: int, q_init: float) -> "QTable":
        return cls(np.full((n_states, n_actions), float(q_init)), q_init)

    @property
    def shape(self):
        return self.values.shape

    def greedy(self) -> np.ndarray:
        return self.values.argmax(axis=1)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["s", "a", "value"])
            for s, row in enumerate(self.values):
                for a, v in enumerate(row):
                    w.writerow([s, a, format_float(v)])


def _select(row: Sequence[float], epsilon: float, rng: RngStream) -> int:
    # Always two draws per call so paired runs stay aligned on the RNG stream.
    u = rng.random()
    if u < epsilon:
        return rng.integers(len(row))
    best = max(row)
    ties = [a for a, v in enumerate(row) if v >= best - TIE_TOLERANCE]
    return ties[rng.integers(len(ties))]


def epsilon_greedy(q, s: int, epsilon: float, rng: RngStream) -> int:
    """Uniform random action with probability ``epsilon``, else a uniformly
    chosen maximizer of ``Q(s, .)``."""
    values = q.values if isinstance(q, QTable) else np.asarray(q)
    return _select(values[s].tolist(), epsilon, rng)


def q_update(q: QTable, t: Transition, config: QLearnConfig) -> float:
    """One Q-learning update with ``t.r`` taken as the (shaped) reward."""
    if t.kind is TerminationKind.TERMINAL or (
            t.kind is TerminationKind.TRUNCATED and not config.truncation_bootstrap):
        bootstrap = 0.0
    else:
        bootstrap = float(q.values[t.s_next].max())
    old = q.values[t.s, t.a]
    new = old + config.alpha * (t.r + config.gamma * bootstrap - old)
    q.values[t.s, t.a] = new
    return new


class QLearner:
    """Step-at-a-time Q-learning on a tabular environment.

    ``q_shift`` adds a per-state offset to the initial table; with
    ``spec=None`` and ``q_shift = Phi`` this is the unshaped learner that
    potential shaping is equivalent to.
    """

    def __init__(self, env, spec: Optional[PotentialSpec], config: QLearnConfig,
                 rng: RngStream, q_shift: Optional[np.ndarray] = None):
        if spec is not None and abs(spec.gamma - config.gamma) > 1e-15:
            raise ConfigurationError("potential gamma must match the learner's gamma")
        self.env = env
        self.spec = spec
        self.config = config
        self.n_actions = env.n_actions
        self._next, self._reward, self._term = env.tables()
        terminal = [s for s in range(env.n_states) if env.is_terminal_state(s)]
        self._phi = (potential_table(spec, env.n_states, terminal).tolist()
                     if spec is not None else None)
        shift = np.zeros(env.n_states) if q_shift is None else np.asarray(q_shift, float)
        self.q = [[config.q_init + float(shift[s])] * self.n_actions
                  for s in range(env.n_states)]
        self.explore_rng = rng.spawn("explore")
        self.eval_rng = rng.spawn("eval")
        self.start = env.reset()
        self.state = self.start
        self.episode_steps = 0
        self.total_steps = 0

    @property
    def q_table(self) -> QTable:
        return QTable(np.array(self.q), self.config.q_init)

    def step(self) -> tuple[int, int, int, float, TerminationKind]:
        """One environment step plus update; returns ``(s, a, s', r', kind)``."""
        cfg = self.config
        s = self.state
        a = _select(self.q[s], cfg.epsilon, self.explore_rng)
        s_next = self._next[s][a]
        r = self._reward[s][a]
        self.episode_steps += 1
        self.total_steps += 1
        if self._term[s][a]:
            kind = TerminationKind.TERMINAL
        elif self.episode_steps >= self.env.max_steps:
            kind = TerminationKind.TRUNCATED
        else:
            kind = TerminationKind.NON_TERMINAL
        ends = kind is not TerminationKind.NON_TERMINAL
        if self._phi is not None:
            phi = self._phi
            r = r + (cfg.gamma * (0.0 if ends else phi[s_next]) - phi[s])
        if kind is TerminationKind.TERMINAL or (ends and not cfg.truncation_bootstrap):
            target = r
        else:
            target = r + cfg.gamma * max(self.q[s_next])
        row = self.q[s]
        row[a] = row[a] + cfg.alpha * (target - row[a])
        if ends:
            self.state = self.start
            self.episode_steps = 0
        else:
            self.state = s_next
        return s, a, s_next, r, kind

    def evaluate(self) -> tuple[float, float]:
        """Mean length and undiscounted original return of ``n_eval`` episodes."""
        cfg = self.config
        lengths, returns = [], []
        for _ in range(cfg.n_eval):
            s, total = self.start, 0.0
            for n in range(1, self.env.max_steps + 1):
                a = _select(self.q[s], cfg.eval_epsilon, self.eval_rng)
                total += self._reward[s][a]
                done = self._term[s][a]
                s = self._next[s][a]
                if done:
                    break
            lengths.append(n)
            returns.append(total)
        return float(np.mean(lengths)), float(np.mean(returns))

    def train(self) -> LearningCurve:
        cfg = self.config
        steps, lengths, returns = [], [], []
        for t in range(1, cfg.train_steps + 1):
            self.step()
            if t % cfg.eval_interval == 0 and cfg.n_eval > 0:
                length, ret = self.evaluate()
                steps.append(t)
                lengths.append(length)
                returns.append(ret)
        return LearningCurve.single_run(steps, lengths, returns)


def train_tabular(env, spec: Optional[PotentialSpec], config: QLearnConfig,
                  rng: RngStream) -> tuple[QTable, LearningCurve]:
    learner = QLearner(env, spec, config, rng)
    curve = learner.train()
    return learner.q_table, curve


def qinit_shift(env, spec: PotentialSpec) -> np.ndarray:
    terminal = [s for s in range(env.n_states) if env.is_terminal_state(s)]
    return potential_table(spec, env.n_states, terminal)


def train_tabular_qinit_shifted(env, spec: PotentialSpec, config: QLearnConfig,
                                rng: RngStream) -> tuple[QTable, LearningCurve]:
    """Unshaped learning from ``Q(s, a) = q_init + Phi(s)``."""
    learner = QLearner(env, None, config, rng, q_shift=qinit_shift(env, spec))
    curve = learner.train()
    return learner.q_table, curve


class QLearningAgent(BaseEstimator):
    """Estimator wrapper: ``fit(env)`` trains, ``predict(states)`` acts greedily.

    Set ``qinit_shifted=True`` to fold the potential into the initial table
    instead of shaping rewards.
    """

    def __init__(self, potential: Optional[PotentialSpec] = None, alpha: float = 0.1,
                 epsilon: float = 0.05, gamma: float = 0.95, q_init: float = 0.0,
                 train_steps: int = 40_000, eval_interval: int = 250, n_eval: int = 10,
                 truncation_bootstrap: bool = True, qinit_shifted: bool = False,
                 seed: int = 0):
        self.potential = potential
        self.alpha = alpha
        self.epsilon = epsilon
        self.gamma = gamma
        self.q_init = q_init
        self.train_steps = train_steps
        self.eval_interval = eval_interval
        self.n_eval = n_eval
        self.truncation_bootstrap = truncation_bootstrap
        self.qinit_shifted = qinit_shifted
        self.seed = seed

    def _config(self) -> QLearnConfig:
        return QLearnConfig(alpha=self.alpha, epsilon=self.epsilon, gamma=self.gamma,
                            train_steps=self.train_steps, q_init=self.q_init,
                            eval_interval=self.eval_interval, n_eval=self.n_eval,
                            truncation_bootstrap=self.truncation_bootstrap)

    def fit(self, env, y=None):
        rng = RngStream(self.seed)
        if self.qinit_shifted:
            if self.potential is None:
                raise ConfigurationError("qinit_shifted needs a potential")
            self.q_table_, self.learning_curve_ = train_tabular_qinit_shifted(
                env, self.potential, self._config(), rng)
        else:
            self.q_table_, self.learning_curve_ = train_tabular(
                env, self.potential, self._config(), rng)
        self.n_states_, self.n_actions_ = self.q_table_.shape
        return self

    def predict(self, states) -> np.ndarray:
        check_is_fitted(self, "q_table_")
        idx = np.asarray(states, dtype=np.intp).ravel()
        if idx.size and (idx.min() < 0 or idx.max() >= self.n_states_):
            raise ValueError("state index out of range")
        return self.q_table_.values[idx].argmax(axis=1)
