"""Potential functions and potential-based shaping rewards.

A potential is built as a small pipeline over a base heuristic::

    phi0 = base(s)
    phi1 = normalized phi0 in [0, 1]          (optional)
    phi2 = exp_base ** phi1                   (optional)
    Phi  = phi2 + bias / (gamma - 1)

and is forced to zero on terminal and truncating states.  With that
convention every non-terminal shaped reward moves by exactly ``bias``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Mapping, Optional, Sequence, Union

import numpy as np

from .core import TerminationKind, Transition
from .envs import CARTPOLE, MOUNTAIN_CAR, GridworldConfig
from .errors import ConfigurationError, CoverageError


class PotentialBase:
    """A state heuristic with a natural affine map into ``[0, 1]``."""

    name = "base"

    def raw(self, s) -> float:
        raise NotImplementedError

    def normalized(self, s) -> float:
        raise NotImplementedError


@dataclass(frozen=True)
class ManhattanToGoal(PotentialBase):
    grid: GridworldConfig
    name = "manhattan"

    def raw(self, s) -> float:
        return -float(self.grid.distance_to_goal(s))

    def normalized(self, s) -> float:
        return 1.0 - self.grid.distance_to_goal(s) / self.grid.max_distance


@dataclass(frozen=True)
class NegAbsPoleAngle(PotentialBase):
    angle_limit: float = CARTPOLE.angle_limit
    name = "neg_abs_pole_angle"

    def raw(self, s) -> float:
        return -abs(float(s[2]))

    def normalized(self, s) -> float:
        return min(max(1.0 - abs(float(s[2])) / self.angle_limit, 0.0), 1.0)


@dataclass(frozen=True)
class AbsCarVelocity(PotentialBase):
    max_speed: float = MOUNTAIN_CAR.max_speed
    name = "abs_car_velocity"

    def raw(self, s) -> float:
        return abs(float(s[1]))

    def normalized(self, s) -> float:
        return min(abs(float(s[1])) / self.max_speed, 1.0)


@dataclass(frozen=True)
class Constant(PotentialBase):
    c: float = 0.0
    name = "constant"

    def raw(self, s) -> float:
        return self.c

    def normalized(self, s) -> float:
        return self.c


@dataclass(frozen=True, eq=False)
class OracleVStar(PotentialBase):
    """Tabulated values (typically V*); normalization is min-max over the table."""

    values: Union[Mapping[int, float], Sequence[float], np.ndarray]
    name = "vstar"
    _lo: float = field(init=False, repr=False)
    _hi: float = field(init=False, repr=False)

    def __post_init__(self):
        vals = list(self.values.values()) if isinstance(self.values, Mapping) else list(self.values)
        object.__setattr__(self, "_lo", float(min(vals)))
        object.__setattr__(self, "_hi", float(max(vals)))

    def raw(self, s) -> float:
        try:
            return float(self.values[int(s)])
        except (KeyError, IndexError):
            raise CoverageError(f"no tabulated potential for state {s!r}") from None

    def normalized(self, s) -> float:
        span = self._hi - self._lo
        return 0.0 if span == 0 else (self.raw(s) - self._lo) / span


@dataclass(frozen=True)
class PotentialSpec:
    base: PotentialBase
    normalize: bool = True
    bias: float = 0.0
    exp_base: Optional[float] = None
    gamma: float = 0.95

    def __post_init__(self):
        if self.exp_base is not None and not self.exp_base > 1:
            raise ConfigurationError(f"exp_base must be > 1, got {self.exp_base}")
        if not 0.0 <= self.gamma <= 1.0:
            raise ConfigurationError(f"gamma must lie in [0, 1], got {self.gamma}")
        if self.gamma == 1.0 and self.bias != 0.0:
            raise ConfigurationError("a bias needs gamma < 1 (it is scaled by 1/(gamma - 1))")

    @property
    def bias_offset(self) -> float:
        return 0.0 if self.bias == 0.0 else self.bias / (self.gamma - 1.0)

    def transformed(self, s) -> float:
        """Potential before the bias offset (``phi2`` in the module docstring)."""
        phi = self.base.normalized(s) if self.normalize else self.base.raw(s)
        if self.exp_base is not None:
            phi = self.exp_base ** phi
        return phi

    def phi(self, s) -> float:
        """Non-terminal potential."""
        return self.transformed(s) + self.bias_offset

    def __call__(self, s, ends_episode: bool = False) -> float:
        return 0.0 if ends_episode else self.phi(s)

    def replace(self, **changes) -> "PotentialSpec":
        return replace(self, **changes)


@dataclass(frozen=True)
class ShapedReward:
    original_r: float
    f: float
    shaped_r: float


def potential(spec: PotentialSpec, s, is_terminal_or_truncating: bool = False) -> float:
    return spec(s, is_terminal_or_truncating)


def shaping_term(spec: PotentialSpec, s, s_next, next_is_terminal_or_truncating: bool) -> float:
    """``gamma * Phi(s_next) - Phi(s)`` with the terminal-zero rule on ``s_next``."""
    return spec.gamma * spec(s_next, next_is_terminal_or_truncating) - spec.phi(s)


def shaped_reward(spec: PotentialSpec, t: Transition) -> ShapedReward:
    f = shaping_term(spec, t.s, t.s_next, t.kind is not TerminationKind.NON_TERMINAL)
    return ShapedReward(t.r, f, t.r + f)


def recommended_bias(gamma: float, q_init: float, r_inf: float) -> float:
    """Bias that cancels the step reward against the initial Q-values.

    >>> recommended_bias(0.95, 0.0, -1.0)
    1.0
    """
    return (1.0 - gamma) * q_init - r_inf


def vstar_potential(oracle_values, gamma: float, bias: float = 0.0,
                    required_states: Optional[Sequence[int]] = None) -> PotentialSpec:
    """``Phi = V*`` used as-is: no normalization, no exponential."""
    base = OracleVStar(oracle_values)
    if required_states is not None:
        for s in required_states:
            base.raw(s)
    return PotentialSpec(base, normalize=False, bias=bias, exp_base=None, gamma=gamma)


def potential_table(spec: PotentialSpec, n_states: int, terminal_states=()) -> np.ndarray:
    """Potentials of a tabular state space, zero on the given terminal states."""
    terminal = set(int(s) for s in terminal_states)
    return np.array([0.0 if s in terminal else spec.phi(s) for s in range(n_states)])


def make_base(name: str, env=None, constant: float = 0.0, values=None) -> PotentialBase:
    """Resolve a base heuristic by its config name."""
    key = name.lower().replace("-", "_")
    if key in ("manhattan", "manhattan_to_goal"):
        if env is None or not hasattr(env, "config"):
            raise ConfigurationError("the Manhattan potential needs a gridworld")
        return ManhattanToGoal(env.config)
    if key in ("neg_abs_pole_angle", "pole_angle"):
        return NegAbsPoleAngle(getattr(getattr(env, "params", None), "angle_limit",
                                       CARTPOLE.angle_limit))
    if key in ("abs_car_velocity", "car_velocity"):
        return AbsCarVelocity(getattr(getattr(env, "params", None), "max_speed",
                                      MOUNTAIN_CAR.max_speed))
    if key == "constant":
        return Constant(constant)
    if key in ("vstar", "oracle_vstar"):
        if values is None:
            raise ConfigurationError("the V* potential needs tabulated values")
        return OracleVStar(values)
    raise ConfigurationError(f"unknown potential base {name!r}")
