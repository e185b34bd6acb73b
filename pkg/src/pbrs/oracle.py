"""Exact value iteration for deterministic tabular MDPs."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import format_float
from .errors import ConfigurationError, ConvergenceError
from .rng import RngStream


@dataclass
class TabularMDP:
    """Deterministic MDP as dense ``(S, A)`` lookup tables.

    ``terminates[s, a]`` marks transitions that end the episode (no bootstrap).
    States flagged in ``terminal_states`` are absorbing with value zero.
    """

    next_state: np.ndarray
    reward: np.ndarray
    terminates: np.ndarray
    gamma: float
    terminal_states: Optional[np.ndarray] = None
    start: int = 0

    def __post_init__(self):
        self.next_state = np.asarray(self.next_state, dtype=np.intp)
        self.reward = np.asarray(self.reward, dtype=float)
        self.terminates = np.asarray(self.terminates, dtype=bool)
        if self.terminal_states is None:
            self.terminal_states = np.zeros(self.n_states, dtype=bool)
        self.terminal_states = np.asarray(self.terminal_states, dtype=bool)
        shape = self.next_state.shape
        if self.reward.shape != shape or self.terminates.shape != shape:
            raise ConfigurationError("next_state, reward and terminates must share a shape")
        if not 0.0 <= self.gamma < 1.0:
            raise ConfigurationError("value iteration needs 0 <= gamma < 1")

    @property
    def n_states(self) -> int:
        return self.next_state.shape[0]

    @property
    def n_actions(self) -> int:
        return self.next_state.shape[1]


@dataclass
class ValueSolution:
    v_star: np.ndarray
    q_star: np.ndarray
    residual: float
    iterations: int
    atol: float = 1e-9
    policy: list[frozenset[int]] = field(init=False)

    def __post_init__(self):
        self.policy = optimal_action_sets(self.q_star, self.atol)


def optimal_action_sets(q: np.ndarray, atol: float = 1e-9) -> list[frozenset[int]]:
    best = q.max(axis=1, keepdims=True)
    return [frozenset(np.flatnonzero(row).tolist()) for row in q >= best - atol]


def bellman_q(mdp: TabularMDP, v: np.ndarray) -> np.ndarray:
    bootstrap = np.where(mdp.terminates, 0.0, v[mdp.next_state])
    q = mdp.reward + mdp.gamma * bootstrap
    q[mdp.terminal_states] = 0.0
    return q


def value_iteration(mdp: TabularMDP, tol: float = 1e-10, max_iters: int = 10**6,
                    atol: float = 1e-9) -> ValueSolution:
    """Synchronous Bellman optimality sweeps until the sup-norm change is below ``tol``."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    v = np.zeros(mdp.n_states)
    residual = np.inf
    for it in range(1, max_iters + 1):
        v_new = bellman_q(mdp, v).max(axis=1)
        residual = float(np.max(np.abs(v_new - v)))
        v = v_new
        if residual < tol:
            q = bellman_q(mdp, v)
            return ValueSolution(v, q, residual, it, atol)
    raise ConvergenceError(f"no convergence after {max_iters} sweeps", residual)


def shaped_mdp(mdp: TabularMDP, spec) -> TabularMDP:
    """Same dynamics with every reward replaced by its potential-shaped value."""
    if not np.isclose(spec.gamma, mdp.gamma, rtol=0, atol=1e-15):
        raise ConfigurationError(f"potential gamma {spec.gamma} != MDP gamma {mdp.gamma}")
    phi = np.array([0.0 if mdp.terminal_states[s] else spec.phi(s)
                    for s in range(mdp.n_states)])
    next_phi = np.where(mdp.terminates, 0.0, phi[mdp.next_state])
    reward = mdp.reward + mdp.gamma * next_phi - phi[:, None]
    reward[mdp.terminal_states] = 0.0
    return TabularMDP(mdp.next_state.copy(), reward, mdp.terminates.copy(), mdp.gamma,
                      mdp.terminal_states.copy(), mdp.start)


def random_mdp(rng: RngStream, n_states: int, n_actions: int, gamma: float,
               p_terminate: float = 0.1) -> TabularMDP:
    """Random deterministic MDP with uniform rewards in ``[-1, 1]``."""
    nxt = np.array([[rng.integers(n_states) for _ in range(n_actions)]
                    for _ in range(n_states)])
    rew = np.array([[rng.uniform(-1.0, 1.0) for _ in range(n_actions)]
                    for _ in range(n_states)])
    term = np.array([[rng.random() < p_terminate for _ in range(n_actions)]
                     for _ in range(n_states)])
    return TabularMDP(nxt, rew, term, gamma)


def write_solution_csv(path, solution: ValueSolution, header: str = "") -> None:
    with open(path, "w", newline="") as fh:
        if header:
            fh.write(header)
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["s", "a", "v_star", "q_star", "optimal"])
        for s, row in enumerate(solution.q_star):
            for a, q in enumerate(row):
                w.writerow([s, a, format_float(solution.v_star[s]), format_float(q),
                            int(a in solution.policy[s])])
