"""MDP building blocks: transitions, episode life cycle and discounted returns."""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence, Union

import numpy as np

from .errors import ContractViolation
from .rng import RngStream

State = Union[int, np.ndarray]


class TerminationKind(enum.Enum):
    NON_TERMINAL = "non_terminal"
    TERMINAL = "terminal"
    TRUNCATED = "truncated"

    @property
    def ends_episode(self) -> bool:
        return self is not TerminationKind.NON_TERMINAL


def resolve_kind(terminated: bool, step_count: int, max_steps: int) -> TerminationKind:
    """Termination is checked first, so it wins over a same-step truncation."""
    if terminated:
        return TerminationKind.TERMINAL
    if step_count >= max_steps:
        return TerminationKind.TRUNCATED
    return TerminationKind.NON_TERMINAL


@dataclass(frozen=True)
class Transition:
    s: State
    a: int
    s_next: State
    r: float
    kind: TerminationKind = TerminationKind.NON_TERMINAL

    def __post_init__(self):
        if not math.isfinite(self.r):
            raise ContractViolation(f"non-finite reward {self.r!r}")

    @property
    def ends_episode(self) -> bool:
        return self.kind.ends_episode

    def with_kind(self, kind: TerminationKind) -> "Transition":
        return Transition(self.s, self.a, self.s_next, self.r, kind)


def discounted_return(rewards: Sequence[float], gamma: float) -> float:
    """Horner evaluation of ``sum_t gamma**t * r_t``.

    >>> discounted_return([0, 0, 1], 0.95)
    0.9025
    """
    if not 0.0 <= gamma <= 1.0:
        raise ValueError(f"gamma must lie in [0, 1], got {gamma}")
    total = 0.0
    for r in reversed(list(rewards)):
        r = float(r)
        if not math.isfinite(r):
            raise ValueError(f"non-finite reward {r!r}")
        total = r + gamma * total
    return total


Policy = Callable[[State, RngStream], int]


def run_episode(env, policy: Policy, max_steps: int, rng: RngStream) -> list[Transition]:
    """Roll out one episode; the caller is expected to have reset ``env``.

    ``env`` must expose ``state``, ``n_actions`` and ``step(action) -> Transition``.
    The cap here is applied on top of whatever cap the environment carries.
    """
    if max_steps < 1:
        raise ValueError("max_steps must be positive")
    log: list[Transition] = []
    s = env.state
    for step in range(1, max_steps + 1):
        a = policy(s, rng)
        if not (isinstance(a, (int, np.integer)) and 0 <= a < env.n_actions):
            raise ContractViolation(f"policy returned invalid action {a!r}")
        t = env.step(int(a))
        if t.kind is TerminationKind.NON_TERMINAL and step == max_steps:
            t = t.with_kind(TerminationKind.TRUNCATED)
        log.append(t)
        if t.ends_episode:
            break
        s = t.s_next
    return log


# -- CSV transition logs ----------------------------------------------------

TRANSITION_COLUMNS = ("step", "s", "a", "s_next", "r", "kind")


def format_float(x: float) -> str:
    return f"{x:.9g}"


def _format_state(s: State) -> str:
    if isinstance(s, (int, np.integer)):
        return str(int(s))
    return ";".join(format_float(float(v)) for v in np.asarray(s).ravel())


def _parse_state(text: str) -> State:
    if ";" in text or "." in text or "e" in text.lower():
        return np.array([float(v) for v in text.split(";")])
    return int(text)


def write_transitions_csv(path, transitions: Iterable[Transition]) -> None:
    """Columns ``step,s,a,s_next,r,kind``; vector states are ``;``-joined."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRANSITION_COLUMNS)
        for i, t in enumerate(transitions):
            w.writerow([i, _format_state(t.s), t.a, _format_state(t.s_next),
                        format_float(t.r), t.kind.value])


def read_transitions_csv(path) -> list[Transition]:
    out = []
    with open(path, newline="") as fh:
        rows = csv.DictReader(row for row in fh if not row.startswith("#"))
        for row in rows:
            out.append(Transition(
                _parse_state(row["s"]), int(row["a"]), _parse_state(row["s_next"]),
                float(row["r"]), TerminationKind(row["kind"]),
            ))
    return out
