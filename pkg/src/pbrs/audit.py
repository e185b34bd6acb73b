"""First-update analysis of shaped rewards.

For untouched Q-values the Q-learning target reduces to
``R' + gamma * Q_init``, so a transition's value moves up exactly when
``R' > (1 - gamma) * Q_init``.  The checks below classify each transition
against that threshold, taking the intended direction from the potential
ordering of its endpoints, and bound the scale of admissible potentials.
"""

from __future__ import annotations

import csv
import enum
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Optional, Sequence

import numpy as np

from .core import TerminationKind, Transition, format_float
from .errors import ConfigurationError
from .shaping import PotentialSpec, shaped_reward

ANALYSIS_LABEL = "first-update analysis"
# Shaped rewards this close (relative) to the threshold count as equal to it:
# exact ties such as a wall bump at matched bias otherwise flip on rounding.
BOUNDARY_RTOL = 1e-12


class Verdict(enum.Enum):
    INCENTIVIZED_CORRECTLY = "incentivized_correctly"
    DISINCENTIVIZED_CORRECTLY = "disincentivized_correctly"
    VIOLATES_REQ1 = "violates_req1"
    VIOLATES_REQ2 = "violates_req2"
    VIOLATES_REQ3 = "violates_req3"
    VIOLATES_GOAL_REQ = "violates_goal_req"
    VIOLATES_TERMINAL_REQ = "violates_terminal_req"

    @property
    def is_violation(self) -> bool:
        return self.value.startswith("violates")


@dataclass(frozen=True)
class AuditInput:
    spec: PotentialSpec
    q_init: float
    r_inf: float
    r_g: float
    transitions: Sequence[Transition]
    # CartPole terminates on failure; the tabular tasks and MountainCar on success.
    terminal_is_goal: bool = True

    def __post_init__(self):
        if not self.transitions:
            raise ConfigurationError("an audit needs at least one transition")
        if not (math.isfinite(self.r_g) and math.isfinite(self.r_inf)):
            raise ConfigurationError("r_g and r_inf must be finite")

    @property
    def threshold(self) -> float:
        return (1.0 - self.spec.gamma) * self.q_init


@dataclass(frozen=True)
class TransitionVerdict:
    verdict: Verdict
    shaped_r: float
    threshold: float
    # Shaped reward exactly at the threshold: the first update leaves Q unchanged.
    boundary: bool = False

    @property
    def increases_q(self) -> bool:
        return self.shaped_r > self.threshold and not self.boundary

    @property
    def decreases_q(self) -> bool:
        return self.shaped_r < self.threshold and not self.boundary


def classify_transition(audit: AuditInput, t: Transition) -> TransitionVerdict:
    spec = audit.spec
    r_shaped = shaped_reward(spec, t).shaped_r
    thr = audit.threshold
    boundary = abs(r_shaped - thr) <= BOUNDARY_RTOL * max(1.0, abs(r_shaped), abs(thr))
    above = r_shaped > thr and not boundary
    below = r_shaped < thr and not boundary

    if t.kind is not TerminationKind.NON_TERMINAL:
        reached_goal = t.kind is TerminationKind.TERMINAL and audit.terminal_is_goal
        if reached_goal:
            ok = above
            v = Verdict.INCENTIVIZED_CORRECTLY if ok else Verdict.VIOLATES_GOAL_REQ
        else:
            ok = below
            v = Verdict.DISINCENTIVIZED_CORRECTLY if ok else Verdict.VIOLATES_TERMINAL_REQ
        return TransitionVerdict(v, r_shaped, thr, boundary)

    # Bias and exponentiation preserve the ordering; compare the transformed values.
    phi_s, phi_next = spec.transformed(t.s), spec.transformed(t.s_next)
    if phi_next > phi_s:
        v = Verdict.INCENTIVIZED_CORRECTLY if above else Verdict.VIOLATES_REQ1
    elif phi_next < phi_s:
        v = Verdict.DISINCENTIVIZED_CORRECTLY if below else Verdict.VIOLATES_REQ2
    else:
        v = Verdict.DISINCENTIVIZED_CORRECTLY if not above else Verdict.VIOLATES_REQ3
    return TransitionVerdict(v, r_shaped, thr, boundary)


class PotentialBounds(NamedTuple):
    lower: float
    upper: float
    feasible: bool

    def contains(self, phi: float) -> bool:
        return self.feasible and self.lower < phi < self.upper


def potential_bounds(gamma: float, q_init: float, r_g: float, r_inf: float) -> PotentialBounds:
    """Open interval every non-terminal potential must lie in for goal-directed tasks.

    Infeasible (empty) unless ``r_g > r_inf``.

    >>> potential_bounds(0.95, 0.0, 1.0, 0.0)
    PotentialBounds(lower=0.0, upper=1.0, feasible=True)
    """
    shift = (1.0 - gamma) * q_init
    return PotentialBounds(r_inf - shift, r_g - shift, r_g > r_inf)


def min_delta_linear(phi_s: float, gamma: float, negative_branch: bool = False) -> float:
    """Smallest potential change a linear potential shapes with the right sign.

    Positive potentials give ``F < 0`` to improvements ``delta`` below the
    returned value; on the negative branch, decreases below it get ``F > 0``.
    Both thresholds are ``(1 - gamma) / gamma * |phi_s|``.
    """
    if gamma <= 0:
        raise ConfigurationError("gamma must be positive")
    if negative_branch and phi_s > 0:
        raise ConfigurationError("negative branch needs phi_s <= 0")
    if not negative_branch and phi_s < 0:
        raise ConfigurationError("positive branch needs phi_s >= 0; pass negative_branch=True")
    return (1.0 - gamma) / gamma * abs(phi_s)


def min_delta_exponential(exp_base: float, gamma: float) -> float:
    """Potential gap ``delta`` solving ``gamma * exp_base**delta == 1``."""
    if not exp_base > 1 or not 0 < gamma <= 1:
        raise ConfigurationError("need exp_base > 1 and 0 < gamma <= 1")
    return math.log(1.0 / gamma) / math.log(exp_base)


def shaping_value(phi_s: float, delta: float, gamma: float,
                  exp_base: Optional[float] = None, bias: float = 0.0) -> float:
    """``F`` for a move from linear potential ``phi_s`` to ``phi_s + delta``."""
    if exp_base is None:
        return gamma * (phi_s + delta) - phi_s + bias
    return gamma * exp_base ** (phi_s + delta) - exp_base ** phi_s + bias


def shaping_surface(exp_base: Optional[float], gamma: float, phi_grid: Iterable[float],
                    delta_grid: Iterable[float], bias: float = 0.0) -> np.ndarray:
    """``F`` over a grid: rows of ``(phi_s, delta, F)``, phi-major."""
    phis = np.asarray(list(phi_grid), dtype=float)
    deltas = np.asarray(list(delta_grid), dtype=float)
    if not (np.all(np.isfinite(phis)) and np.all(np.isfinite(deltas))):
        raise ConfigurationError("grids must be finite")
    P, D = np.meshgrid(phis, deltas, indexing="ij")
    if exp_base is None:
        F = gamma * (P + D) - P + bias
    else:
        F = gamma * np.power(exp_base, P + D) - np.power(exp_base, P) + bias
    return np.column_stack([P.ravel(), D.ravel(), F.ravel()])


def write_surface_csv(path, surfaces: dict, gamma: float, header: str = "") -> None:
    """``surfaces`` maps a label (``linear`` or ``exp<base>``) to a surface array."""
    with open(path, "w", newline="") as fh:
        if header:
            fh.write(header)
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["potential", "gamma", "phi_s", "delta", "F"])
        for label, table in surfaces.items():
            for phi, delta, f in table:
                w.writerow([label, format_float(gamma), format_float(phi),
                            format_float(delta), format_float(f)])


# -- Whole-audit reports -----------------------------------------------------------

@dataclass
class AuditReport:
    rows: list[tuple[Transition, TransitionVerdict]]
    bounds: PotentialBounds
    out_of_bounds: int
    label: str = ANALYSIS_LABEL
    counts: Counter = field(init=False)

    def __post_init__(self):
        self.counts = Counter(v.verdict for _, v in self.rows)

    @property
    def n_violations(self) -> int:
        return sum(n for v, n in self.counts.items() if v.is_violation)

    def summary(self) -> str:
        lines = [f"# audit ({self.label})", f"transitions: {len(self.rows)}"]
        for v in Verdict:
            lines.append(f"{v.value}: {self.counts.get(v, 0)}")
        lines.append(f"boundary: {sum(1 for _, v in self.rows if v.boundary)}")
        if self.bounds.feasible:
            lines.append(f"potential bounds: ({format_float(self.bounds.lower)}, "
                         f"{format_float(self.bounds.upper)})")
        else:
            lines.append("potential bounds: infeasible (r_g <= r_inf)")
        lines.append(f"potentials outside bounds: {self.out_of_bounds}")
        return "\n".join(lines)


def audit(inp: AuditInput) -> AuditReport:
    rows = [(t, classify_transition(inp, t)) for t in inp.transitions]
    bounds = potential_bounds(inp.spec.gamma, inp.q_init, inp.r_g, inp.r_inf)
    # Scale check over every distinct non-terminal start state seen.
    seen, outside = set(), 0
    for t in inp.transitions:
        key = t.s if isinstance(t.s, (int, np.integer)) else tuple(np.ravel(t.s))
        if key in seen:
            continue
        seen.add(key)
        if not bounds.contains(inp.spec.phi(t.s)):
            outside += 1
    return AuditReport(rows, bounds, outside)


def write_audit_csv(path, report: AuditReport, header: str = "") -> None:
    with open(path, "w", newline="") as fh:
        if header:
            fh.write(header)
        fh.write(f"# {report.label}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "a", "kind", "r", "shaped_r", "threshold", "verdict", "boundary"])
        for i, (t, v) in enumerate(report.rows):
            w.writerow([i, t.a, t.kind.value, format_float(t.r), format_float(v.shaped_r),
                        format_float(v.threshold), v.verdict.value, int(v.boundary)])


def enumerate_transitions(env) -> list[Transition]:
    """Every (state, action) transition of a tabular environment, cap ignored."""
    nxt, rew, term = env.tables()
    out = []
    for s in range(env.n_states):
        if env.is_terminal_state(s):
            continue
        for a in range(env.n_actions):
            kind = TerminationKind.TERMINAL if term[s][a] else TerminationKind.NON_TERMINAL
            out.append(Transition(s, a, nxt[s][a], rew[s][a], kind))
    return out
