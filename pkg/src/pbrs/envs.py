"""Gridworld, CartPole and MountainCar.

Every ``step`` returns a :class:`~pbrs.core.Transition` whose ``kind``
separates environmental termination from the step cap.  CartPole and
MountainCar use the classic published constants (Barto et al. 1983;
Moore 1990) as shipped by the common benchmark suites.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from .core import TerminationKind, Transition, resolve_kind
from .errors import ConfigurationError, NumericFault
from .rng import RngStream


class RewardMode(enum.Enum):
    GOAL_DIRECTED = "goal_directed"
    ON_STEP = "on_step"

    @property
    def r_goal(self) -> float:
        return 1.0 if self is RewardMode.GOAL_DIRECTED else -1.0

    @property
    def r_inf(self) -> float:
        return 0.0 if self is RewardMode.GOAL_DIRECTED else -1.0


# -- Gridworld -----------------------------------------------------------------

UP, DOWN, LEFT, RIGHT = range(4)
_MOVES = {UP: (0, -1), DOWN: (0, 1), LEFT: (-1, 0), RIGHT: (1, 0)}

Cell = tuple[int, int]


@dataclass(frozen=True)
class GridworldConfig:
    """Square-ish grid; cells are ``(x, y)`` with ``(0, 0)`` top-left.

    The agent starts top-left and the single goal is bottom-right.
    """

    width: int
    height: int
    reward_mode: RewardMode = RewardMode.GOAL_DIRECTED
    max_steps: int = 250

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ConfigurationError("grid dimensions must be positive")
        if self.width * self.height < 2:
            raise ConfigurationError("start and goal must differ")
        if self.max_steps < 1:
            raise ConfigurationError("max_steps must be >= 1")
        if not isinstance(self.reward_mode, RewardMode):
            object.__setattr__(self, "reward_mode", RewardMode(self.reward_mode))

    @property
    def n_states(self) -> int:
        return self.width * self.height

    @property
    def start(self) -> Cell:
        return (0, 0)

    @property
    def goal(self) -> Cell:
        return (self.width - 1, self.height - 1)

    @property
    def start_index(self) -> int:
        return self.index(self.start)

    @property
    def goal_index(self) -> int:
        return self.index(self.goal)

    @property
    def max_distance(self) -> int:
        return (self.width - 1) + (self.height - 1)

    def index(self, cell: Cell) -> int:
        x, y = cell
        return y * self.width + x

    def cell(self, index: int) -> Cell:
        return (index % self.width, index // self.width)

    def distance_to_goal(self, s: Union[int, Cell]) -> int:
        x, y = self.cell(s) if isinstance(s, (int, np.integer)) else s
        gx, gy = self.goal
        return abs(gx - x) + abs(gy - y)


def gridworld_step(config: GridworldConfig, s: Union[int, Cell], a: int) -> Transition:
    """One deterministic move; off-grid moves leave the agent in place.

    States in the returned transition are flat indices.  The step cap is not
    applied here (see :class:`Gridworld`).
    """
    x, y = config.cell(s) if isinstance(s, (int, np.integer)) else s
    dx, dy = _MOVES[a]
    nx, ny = x + dx, y + dy
    if not (0 <= nx < config.width and 0 <= ny < config.height):
        nx, ny = x, y
    s_next = config.index((nx, ny))
    mode = config.reward_mode
    if (nx, ny) == config.goal:
        return Transition(config.index((x, y)), a, s_next, mode.r_goal, TerminationKind.TERMINAL)
    return Transition(config.index((x, y)), a, s_next, mode.r_inf, TerminationKind.NON_TERMINAL)


class Gridworld:
    n_actions = 4
    terminal_is_goal = True

    def __init__(self, config: GridworldConfig):
        self.config = config
        self.n_states = config.n_states
        self.max_steps = config.max_steps
        self.state = config.start_index
        self.steps = 0
        self._tables = None

    @property
    def r_goal(self) -> float:
        return self.config.reward_mode.r_goal

    @property
    def r_inf(self) -> float:
        return self.config.reward_mode.r_inf

    def reset(self, rng: RngStream | None = None) -> int:
        self.state = self.config.start_index
        self.steps = 0
        return self.state

    def step(self, a: int) -> Transition:
        t = gridworld_step(self.config, self.state, a)
        self.steps += 1
        kind = resolve_kind(t.kind is TerminationKind.TERMINAL, self.steps, self.max_steps)
        if kind is not t.kind:
            t = t.with_kind(kind)
        self.state = t.s_next
        return t

    def is_terminal_state(self, s: int) -> bool:
        return s == self.config.goal_index

    def tables(self) -> tuple[list[list[int]], list[list[float]], list[list[bool]]]:
        """Dense ``(next_state, reward, terminates)`` lookup rows per state.

        The goal row is an absorbing self-loop that is never executed.
        """
        if self._tables is None:
            nxt, rew, term = [], [], []
            for s in range(self.n_states):
                if self.is_terminal_state(s):
                    nxt.append([s] * 4)
                    rew.append([0.0] * 4)
                    term.append([True] * 4)
                    continue
                ts = [gridworld_step(self.config, s, a) for a in range(4)]
                nxt.append([t.s_next for t in ts])
                rew.append([t.r for t in ts])
                term.append([t.kind is TerminationKind.TERMINAL for t in ts])
            self._tables = (nxt, rew, term)
        return self._tables

    def to_mdp(self, gamma: float):
        from .oracle import TabularMDP

        nxt, rew, term = self.tables()
        terminal_states = np.zeros(self.n_states, dtype=bool)
        terminal_states[self.config.goal_index] = True
        return TabularMDP(np.array(nxt), np.array(rew, dtype=float), np.array(term),
                          gamma, terminal_states=terminal_states,
                          start=self.config.start_index)

    def optimal_length(self) -> int:
        return self.config.max_distance


# -- CartPole ------------------------------------------------------------------

@dataclass(frozen=True)
class CartPoleParams:
    gravity: float = 9.8
    cart_mass: float = 1.0
    pole_mass: float = 0.1
    half_length: float = 0.5
    force: float = 10.0
    tau: float = 0.02
    angle_limit: float = 12 * 2 * math.pi / 360
    position_limit: float = 2.4


CARTPOLE = CartPoleParams()


def cartpole_dynamics(state, action, p: CartPoleParams = CARTPOLE):
    """Explicit Euler update; works on a single state or a ``(n, 4)`` batch."""
    state = np.asarray(state, dtype=float)
    x, x_dot, theta, theta_dot = (state[..., i] for i in range(4))
    force = np.where(np.asarray(action) == 1, p.force, -p.force)
    total_mass = p.cart_mass + p.pole_mass
    pml = p.pole_mass * p.half_length
    cos, sin = np.cos(theta), np.sin(theta)
    temp = (force + pml * theta_dot**2 * sin) / total_mass
    theta_acc = (p.gravity * sin - cos * temp) / (
        p.half_length * (4.0 / 3.0 - p.pole_mass * cos**2 / total_mass))
    x_acc = temp - pml * theta_acc * cos / total_mass
    out = np.stack([
        x + p.tau * x_dot,
        x_dot + p.tau * x_acc,
        theta + p.tau * theta_dot,
        theta_dot + p.tau * theta_acc,
    ], axis=-1)
    failed = (np.abs(out[..., 0]) > p.position_limit) | (np.abs(out[..., 2]) > p.angle_limit)
    return out, failed


def cartpole_step(s, a: int, p: CartPoleParams = CARTPOLE) -> Transition:
    """Scalar fast path of :func:`cartpole_dynamics` (kept in sync by tests)."""
    s = np.asarray(s, dtype=float)
    x, x_dot, theta, theta_dot = (float(v) for v in s)
    if not all(math.isfinite(v) for v in (x, x_dot, theta, theta_dot)):
        raise NumericFault("non-finite CartPole state", state=s.tolist())
    force = p.force if a == 1 else -p.force
    total_mass = p.cart_mass + p.pole_mass
    pml = p.pole_mass * p.half_length
    cos, sin = math.cos(theta), math.sin(theta)
    temp = (force + pml * theta_dot * theta_dot * sin) / total_mass
    theta_acc = (p.gravity * sin - cos * temp) / (
        p.half_length * (4.0 / 3.0 - p.pole_mass * cos * cos / total_mass))
    x_acc = temp - pml * theta_acc * cos / total_mass
    x, x_dot = x + p.tau * x_dot, x_dot + p.tau * x_acc
    theta, theta_dot = theta + p.tau * theta_dot, theta_dot + p.tau * theta_acc
    failed = abs(x) > p.position_limit or abs(theta) > p.angle_limit
    kind = TerminationKind.TERMINAL if failed else TerminationKind.NON_TERMINAL
    return Transition(s, a, np.array([x, x_dot, theta, theta_dot]), 1.0, kind)


class CartPole:
    n_actions = 2
    obs_dim = 4
    terminal_is_goal = False
    r_inf = 1.0
    r_goal = 1.0

    def __init__(self, max_steps: int = 500, params: CartPoleParams = CARTPOLE):
        self.params = params
        self.max_steps = max_steps
        self.state = np.zeros(4)
        self.steps = 0

    def reset(self, rng: RngStream) -> np.ndarray:
        self.state = np.array([rng.uniform(-0.05, 0.05) for _ in range(4)])
        self.steps = 0
        return self.state

    def step(self, a: int) -> Transition:
        t = cartpole_step(self.state, a, self.params)
        self.steps += 1
        kind = resolve_kind(t.kind is TerminationKind.TERMINAL, self.steps, self.max_steps)
        if kind is not t.kind:
            t = t.with_kind(kind)
        self.state = t.s_next
        return t

    def sample_state(self, rng: RngStream) -> np.ndarray:
        """A random state inside the non-terminal region (for probing)."""
        p = self.params
        return np.array([rng.uniform(-p.position_limit, p.position_limit),
                         rng.uniform(-2.0, 2.0),
                         rng.uniform(-p.angle_limit, p.angle_limit),
                         rng.uniform(-2.0, 2.0)])


# -- MountainCar ---------------------------------------------------------------

@dataclass(frozen=True)
class MountainCarParams:
    force: float = 0.001
    gravity: float = 0.0025
    max_speed: float = 0.07
    min_position: float = -1.2
    max_position: float = 0.6
    goal_position: float = 0.5
    goal_velocity: float = 0.0


MOUNTAIN_CAR = MountainCarParams()


def mountain_car_dynamics(state, action, p: MountainCarParams = MOUNTAIN_CAR):
    """Works on a single ``(position, velocity)`` state or a batch."""
    state = np.asarray(state, dtype=float)
    position, velocity = state[..., 0], state[..., 1]
    velocity = velocity + (np.asarray(action) - 1) * p.force - np.cos(3 * position) * p.gravity
    velocity = np.clip(velocity, -p.max_speed, p.max_speed)
    position = np.clip(position + velocity, p.min_position, p.max_position)
    velocity = np.where((position == p.min_position) & (velocity < 0), 0.0, velocity)
    done = (position >= p.goal_position) & (velocity >= p.goal_velocity)
    return np.stack([position, velocity], axis=-1), done


def mountain_car_step(s, a: int, p: MountainCarParams = MOUNTAIN_CAR) -> Transition:
    s = np.asarray(s, dtype=float)
    position, velocity = float(s[0]), float(s[1])
    if not (math.isfinite(position) and math.isfinite(velocity)):
        raise NumericFault("non-finite MountainCar state", state=s.tolist())
    velocity += (a - 1) * p.force - math.cos(3 * position) * p.gravity
    velocity = min(max(velocity, -p.max_speed), p.max_speed)
    position = min(max(position + velocity, p.min_position), p.max_position)
    if position == p.min_position and velocity < 0:
        velocity = 0.0
    done = position >= p.goal_position and velocity >= p.goal_velocity
    kind = TerminationKind.TERMINAL if done else TerminationKind.NON_TERMINAL
    return Transition(s, a, np.array([position, velocity]), -1.0, kind)


class MountainCar:
    n_actions = 3
    obs_dim = 2
    terminal_is_goal = True
    r_inf = -1.0
    r_goal = -1.0

    def __init__(self, max_steps: int = 200, params: MountainCarParams = MOUNTAIN_CAR):
        self.params = params
        self.max_steps = max_steps
        self.state = np.array([-0.5, 0.0])
        self.steps = 0

    def reset(self, rng: RngStream) -> np.ndarray:
        self.state = np.array([rng.uniform(-0.6, -0.4), 0.0])
        self.steps = 0
        return self.state

    def step(self, a: int) -> Transition:
        t = mountain_car_step(self.state, a, self.params)
        self.steps += 1
        kind = resolve_kind(t.kind is TerminationKind.TERMINAL, self.steps, self.max_steps)
        if kind is not t.kind:
            t = t.with_kind(kind)
        self.state = t.s_next
        return t

    def sample_state(self, rng: RngStream) -> np.ndarray:
        p = self.params
        return np.array([rng.uniform(p.min_position, p.goal_position),
                         rng.uniform(-p.max_speed, p.max_speed)])


def make_env(name: str, **params):
    name = name.lower().replace("-", "_")
    if name == "gridworld":
        return Gridworld(GridworldConfig(**params))
    if name == "cartpole":
        return CartPole(**params)
    if name in ("mountaincar", "mountain_car"):
        return MountainCar(**params)
    raise ConfigurationError(f"unknown environment {name!r}")
