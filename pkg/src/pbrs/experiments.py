"""Experiment configuration, seeded multi-run orchestration and CSV output.

A config is flat ``key = value`` text with namespaced keys::

    env.name = gridworld
    env.width = 11
    agent.q_init = -1, 0, 1
    potential.base = manhattan
    potential.exp_base = 32
    potential.bias = matched-1, matched, matched+1
    run.seeds = 0, 1, 2

Lines starting with ``#`` are comments; unknown keys are errors.
"""

from __future__ import annotations

import csv
import math
import os
import re
from dataclasses import dataclass, field
from typing import Any, Callable, Optional

from .core import format_float
from .curves import CURVE_COLUMNS, LearningCurve, aggregate, write_curve_rows
from .dqn import DQNConfig, train_dqn
from .envs import RewardMode, make_env
from .errors import ConfigurationError, NumericFault
from .oracle import value_iteration
from .rng import RngStream
from .shaping import PotentialSpec, make_base, recommended_bias
from .tabular import QLearnConfig, train_tabular, train_tabular_qinit_shifted

AGENTS = ("tabular", "tabular-qinit-shifted", "dqn")


# -- Value parsers ---------------------------------------------------------------

def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _opt(parse: Callable[[str], Any]) -> Callable[[str], Any]:
    def inner(text: str):
        if text.strip().lower() in ("", "none", "default"):
            return None
        return parse(text)
    return inner


def _list(parse: Callable[[str], Any]) -> Callable[[str], tuple]:
    def inner(text: str) -> tuple:
        return tuple(parse(p.strip()) for p in text.split(",") if p.strip())
    return inner


def _finite(text: str) -> float:
    x = float(text)
    if not math.isfinite(x):
        raise ValueError(f"not finite: {text!r}")
    return x


_BIAS_RE = re.compile(r"^matched(?:\s*([+-])\s*([0-9.eE+-]+))?$")


def _bias_token(text: str) -> str:
    t = text.strip().lower().replace(" ", "")
    if t == "none" or _BIAS_RE.match(t):
        return t
    _finite(t)
    return t


def _fmt(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return format_float(value)
    if isinstance(value, tuple):
        return ",".join(_fmt(v) for v in value)
    return str(value)


# key -> (parser, default).  ``None`` defaults mean "the agent/environment default".
SCHEMA: dict[str, tuple[Callable[[str], Any], Any]] = {
    "env.name": (str, "gridworld"),
    "env.width": (int, 11),
    "env.height": (int, 11),
    "env.reward_mode": (str, "goal_directed"),
    "env.max_steps": (_opt(int), None),
    "agent.kind": (str, "tabular"),
    "agent.q_init": (_list(_finite), (0.0,)),
    "agent.gamma": (_opt(_finite), None),
    "agent.alpha": (_finite, 0.1),
    "agent.epsilon": (_finite, 0.05),
    "agent.eval_epsilon": (_finite, 0.05),
    "agent.truncation_bootstrap": (_bool, True),
    "dqn.lr": (_finite, 1e-4),
    "dqn.batch_size": (int, 32),
    "dqn.buffer_size": (int, 50_000),
    "dqn.eps_start": (_finite, 1.0),
    "dqn.eps_end": (_finite, 0.05),
    "dqn.eps_decay_steps": (int, 10_000),
    "dqn.learning_starts": (int, 1_000),
    "dqn.train_freq": (int, 4),
    "dqn.grad_steps": (int, 1),
    "dqn.target_update_interval": (int, 10_000),
    "dqn.hidden": (_list(int), (64, 64)),
    "dqn.max_grad_norm": (_finite, 10.0),
    "dqn.loss": (str, "mse"),
    "potential.base": (str, "none"),
    "potential.normalize": (_bool, True),
    "potential.bias": (_list(_bias_token), ("0",)),
    "potential.exp_base": (_opt(_finite), None),
    "potential.constant": (_finite, 0.0),
    "run.seeds": (_list(int), (0, 1, 2)),
    "run.train_steps": (_opt(int), None),
    "run.eval_interval": (_opt(int), None),
    "run.n_eval": (_opt(int), None),
    "run.output": (str, "results"),
    "solve.tol": (_finite, 1e-10),
    "audit.q_init": (_opt(_finite), None),
    "audit.r_goal": (_opt(_finite), None),
    "audit.r_inf": (_opt(_finite), None),
    "surface.gamma": (_finite, 0.75),
    "surface.exp_bases": (_list(_finite), (8.0, 64.0)),
    "surface.bias": (_finite, 0.0),
    "surface.phi_min": (_finite, 0.0),
    "surface.phi_max": (_finite, 1.0),
    "surface.phi_points": (int, 11),
    "surface.delta_min": (_finite, -0.5),
    "surface.delta_max": (_finite, 0.5),
    "surface.delta_points": (int, 101),
}

# Agent-dependent defaults: (gamma, train_steps, eval_interval, n_eval).
_TABULAR_DEFAULTS = (0.95, 250_000, 250, 10)
_DQN_DEFAULTS = (0.99, 250_000, 500, 5)


@dataclass(frozen=True)
class ExperimentConfig:
    values: dict = field(default_factory=dict)

    def __post_init__(self):
        merged = {k: d for k, (_, d) in SCHEMA.items()}
        for k, v in self.values.items():
            if k not in SCHEMA:
                raise ConfigurationError(f"unknown config key {k!r}")
            merged[k] = v
        object.__setattr__(self, "values", merged)
        self._validate()

    def __getitem__(self, key: str):
        return self.values[key]

    def _validate(self) -> None:
        v = self.values
        if v["agent.kind"] not in AGENTS:
            raise ConfigurationError(f"agent.kind must be one of {AGENTS}")
        if not v["run.seeds"]:
            raise ConfigurationError("run.seeds must not be empty")
        if len(set(v["run.seeds"])) != len(v["run.seeds"]):
            raise ConfigurationError("run.seeds has duplicates")
        if not v["agent.q_init"]:
            raise ConfigurationError("agent.q_init must not be empty")
        if not v["potential.bias"]:
            raise ConfigurationError("potential.bias must not be empty")
        try:
            RewardMode(v["env.reward_mode"])
        except ValueError:
            raise ConfigurationError(f"unknown reward mode {v['env.reward_mode']!r}") from None
        if self.train_steps < 1 or self.eval_interval < 1:
            raise ConfigurationError("run.train_steps and run.eval_interval must be positive")
        if self.train_steps % self.eval_interval:
            raise ConfigurationError("run.eval_interval must divide run.train_steps")
        if self.is_dqn and self.env_name == "gridworld":
            raise ConfigurationError("the DQN agent needs a continuous-state environment")
        if not self.is_dqn and self.env_name != "gridworld":
            raise ConfigurationError("tabular agents need the gridworld")
        if v["agent.kind"] == "tabular-qinit-shifted" and self.potential_base == "none":
            raise ConfigurationError("tabular-qinit-shifted needs a potential")

    # -- resolved views ----------------------------------------------------------

    @property
    def env_name(self) -> str:
        return self.values["env.name"].lower().replace("-", "_")

    @property
    def is_dqn(self) -> bool:
        return self.values["agent.kind"] == "dqn"

    @property
    def _defaults(self) -> tuple:
        return _DQN_DEFAULTS if self.is_dqn else _TABULAR_DEFAULTS

    @property
    def gamma(self) -> float:
        g = self.values["agent.gamma"]
        return self._defaults[0] if g is None else g

    @property
    def train_steps(self) -> int:
        n = self.values["run.train_steps"]
        return self._defaults[1] if n is None else n

    @property
    def eval_interval(self) -> int:
        n = self.values["run.eval_interval"]
        return self._defaults[2] if n is None else n

    @property
    def n_eval(self) -> int:
        n = self.values["run.n_eval"]
        return self._defaults[3] if n is None else n

    @property
    def potential_base(self) -> str:
        return self.values["potential.base"].lower()

    @property
    def seeds(self) -> tuple[int, ...]:
        return self.values["run.seeds"]

    def replace(self, values: dict) -> "ExperimentConfig":
        """Copy with the given (already parsed) keys changed."""
        return ExperimentConfig({**self.values, **values})

    def with_seed_offset(self, offset: int) -> "ExperimentConfig":
        return self.replace({"run.seeds": tuple(s + offset for s in self.seeds)})

    def desk_scale(self) -> "ExperimentConfig":
        """Apply the desk-scale presets: gridworlds 11x11 and 40,000 steps;
        continuous tasks 60,000 steps with target updates every 2,000; three seeds."""
        new = {"run.seeds": self.seeds[:3]}
        if self.env_name == "gridworld":
            new.update({"env.width": 11, "env.height": 11, "run.train_steps": 40_000})
        else:
            new.update({"run.train_steps": 60_000, "dqn.target_update_interval": 2_000})
        return self.replace(new)

    def to_text(self) -> str:
        return "".join(f"{k} = {_fmt(v)}\n" for k, v in sorted(self.values.items()))

    def provenance(self) -> str:
        """Header comment block embedded in every output CSV."""
        lines = ["# pbrs experiment output", "# resolved config:"]
        lines += [f"#   {k} = {_fmt(v)}" for k, v in sorted(self.values.items())]
        lines.append(f"# seeds: {_fmt(self.seeds)}")
        return "\n".join(lines) + "\n"


def parse_config(text: str) -> ExperimentConfig:
    values = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigurationError(f"line {n}: expected key = value")
        key, _, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if key not in SCHEMA:
            raise ConfigurationError(f"line {n}: unknown config key {key!r}")
        if key in values:
            raise ConfigurationError(f"line {n}: duplicate key {key!r}")
        try:
            values[key] = SCHEMA[key][0](val)
        except ValueError as exc:
            raise ConfigurationError(f"line {n}: bad value for {key}: {exc}") from None
    return ExperimentConfig(values)


def load_config(path) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


# -- Building blocks ---------------------------------------------------------------

def build_env(config: ExperimentConfig):
    v = config.values
    params: dict = {}
    if v["env.max_steps"] is not None:
        params["max_steps"] = v["env.max_steps"]
    if config.env_name == "gridworld":
        params.update(width=v["env.width"], height=v["env.height"],
                      reward_mode=RewardMode(v["env.reward_mode"]))
    return make_env(config.env_name, **params)


def resolve_bias(token: str, gamma: float, q_init: float, r_inf: float) -> Optional[float]:
    """Numeric bias for a ``potential.bias`` token; ``None`` means unshaped."""
    if token == "none":
        return None
    m = _BIAS_RE.match(token)
    if m is None:
        return float(token)
    b = recommended_bias(gamma, q_init, r_inf)
    if m.group(1):
        off = float(m.group(2))
        b = b + off if m.group(1) == "+" else b - off
    return b


def build_spec(config: ExperimentConfig, env, bias: Optional[float]) -> Optional[PotentialSpec]:
    if bias is None or config.potential_base == "none":
        return None
    v = config.values
    values = None
    if config.potential_base in ("vstar", "oracle_vstar"):
        values = value_iteration(env.to_mdp(config.gamma), tol=v["solve.tol"]).v_star
        if v["potential.normalize"] or v["potential.exp_base"] is not None:
            raise ConfigurationError("the V* potential is used as-is: set "
                                     "potential.normalize = false and no exp_base")
    base = make_base(config.potential_base, env, v["potential.constant"], values)
    return PotentialSpec(base, normalize=v["potential.normalize"], bias=bias,
                         exp_base=v["potential.exp_base"], gamma=config.gamma)


def tabular_config(config: ExperimentConfig, q_init: float) -> QLearnConfig:
    v = config.values
    return QLearnConfig(alpha=v["agent.alpha"], epsilon=v["agent.epsilon"],
                        gamma=config.gamma, train_steps=config.train_steps, q_init=q_init,
                        eval_interval=config.eval_interval, n_eval=config.n_eval,
                        eval_epsilon=v["agent.eval_epsilon"],
                        truncation_bootstrap=v["agent.truncation_bootstrap"])


def dqn_config(config: ExperimentConfig) -> DQNConfig:
    v = config.values
    return DQNConfig(lr=v["dqn.lr"], batch_size=v["dqn.batch_size"],
                     buffer_size=v["dqn.buffer_size"], gamma=config.gamma,
                     eps_start=v["dqn.eps_start"], eps_end=v["dqn.eps_end"],
                     eps_decay_steps=v["dqn.eps_decay_steps"],
                     learning_starts=v["dqn.learning_starts"], train_freq=v["dqn.train_freq"],
                     grad_steps=v["dqn.grad_steps"],
                     target_update_interval=v["dqn.target_update_interval"],
                     hidden=v["dqn.hidden"], max_grad_norm=v["dqn.max_grad_norm"],
                     loss=v["dqn.loss"], eval_interval=config.eval_interval,
                     n_eval=config.n_eval)


# -- Orchestration -----------------------------------------------------------------

@dataclass(frozen=True)
class Arm:
    """One (Q_init, bias) series of an experiment."""

    q_init: float
    bias_token: str
    bias: Optional[float]

    @property
    def label(self) -> str:
        b = "unshaped" if self.bias is None else f"b={format_float(self.bias)}"
        return f"q_init={format_float(self.q_init)} {b}"


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    runs: dict = field(default_factory=dict)       # (arm, seed) -> LearningCurve
    aggregates: dict = field(default_factory=dict)  # arm -> LearningCurve
    excluded: list = field(default_factory=list)   # (arm, seed, message)

    @property
    def arms(self) -> list[Arm]:
        return list(self.aggregates)

    def arm(self, q_init: float, bias_token: str) -> Arm:
        for a in self.aggregates:
            if a.q_init == q_init and a.bias_token == bias_token:
                return a
        raise KeyError((q_init, bias_token))


def experiment_arms(config: ExperimentConfig, env) -> list[Arm]:
    arms = []
    for q in config.values["agent.q_init"]:
        for tok in config.values["potential.bias"]:
            bias = resolve_bias(tok, config.gamma, q, env.r_inf)
            if config.potential_base == "none":
                bias = None
            arm = Arm(q, tok, bias)
            if arm not in arms:
                arms.append(arm)
    return arms


def run_single(config: ExperimentConfig, arm: Arm, seed: int) -> LearningCurve:
    env = build_env(config)
    spec = build_spec(config, env, arm.bias)
    rng = RngStream(seed)
    kind = config.values["agent.kind"]
    if kind == "dqn":
        info = {"q_init": arm.q_init, "bias": arm.bias, "seed": seed}
        _, curve = train_dqn(env, spec, dqn_config(config), config.train_steps, rng, info)
    elif kind == "tabular-qinit-shifted":
        if spec is None:
            raise ConfigurationError("tabular-qinit-shifted needs a potential")
        _, curve = train_tabular_qinit_shifted(env, spec, tabular_config(config, arm.q_init), rng)
    else:
        _, curve = train_tabular(env, spec, tabular_config(config, arm.q_init), rng)
    return curve


def run_experiment(config: ExperimentConfig, write: bool = True,
                   progress: Optional[Callable[[str], None]] = None) -> ExperimentResult:
    """One run per (arm, seed), aggregated per arm; CSVs go to ``run.output``.

    A run that raises :class:`NumericFault` is dropped from its aggregate and
    listed in the output metadata.
    """
    env = build_env(config)
    result = ExperimentResult(config)
    for arm in experiment_arms(config, env):
        curves = []
        for seed in config.seeds:
            try:
                curve = run_single(config, arm, seed)
            except NumericFault as exc:
                result.excluded.append((arm, seed, str(exc)))
                if progress:
                    progress(f"{arm.label} seed={seed}: excluded ({exc})")
                continue
            result.runs[(arm, seed)] = curve
            curves.append(curve)
            if progress:
                progress(f"{arm.label} seed={seed}: final mean_len "
                         f"{format_float(curve.mean_len[-1])}")
        if curves:
            result.aggregates[arm] = aggregate(curves)
    if write:
        write_results(result, config.values["run.output"])
    return result


_ARM_COLUMNS = ("q_init", "bias_setting", "bias")


def _arm_prefix(arm: Arm) -> list:
    return [format_float(arm.q_init), arm.bias_token,
            "none" if arm.bias is None else format_float(arm.bias)]


def write_results(result: ExperimentResult, out_dir) -> tuple[str, str]:
    os.makedirs(out_dir, exist_ok=True)
    header = result.config.provenance()
    if result.excluded:
        header += "".join(f"# excluded: {a.label} seed={s}: {msg}\n"
                          for a, s, msg in result.excluded)
    else:
        header += "# excluded: none\n"
    runs_path = os.path.join(out_dir, "runs.csv")
    agg_path = os.path.join(out_dir, "aggregate.csv")
    with open(runs_path, "w", newline="") as fh:
        fh.write(header)
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([*_ARM_COLUMNS, "seed", *CURVE_COLUMNS])
        for (arm, seed), curve in result.runs.items():
            write_curve_rows(w, curve, [*_arm_prefix(arm), seed])
    with open(agg_path, "w", newline="") as fh:
        fh.write(header)
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([*_ARM_COLUMNS, *CURVE_COLUMNS])
        for arm, curve in result.aggregates.items():
            write_curve_rows(w, curve, _arm_prefix(arm))
    return runs_path, agg_path


def read_curve_csv(path) -> dict[str, LearningCurve]:
    """Series from an aggregate, runs or single-curve CSV, keyed by label."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(line for line in fh if not line.startswith("#")))
    if not rows:
        raise ConfigurationError(f"{path}: no data rows")
    missing = set(CURVE_COLUMNS) - set(rows[0])
    if missing:
        raise ConfigurationError(f"{path}: missing columns {sorted(missing)}")
    groups: dict[str, list] = {}
    for r in rows:
        parts = []
        if "q_init" in r:
            parts.append(f"q_init={r['q_init']}")
        if "bias" in r:
            parts.append("unshaped" if r["bias"] == "none" else f"b={r['bias']}")
        if "seed" in r:
            parts.append(f"seed={r['seed']}")
        groups.setdefault(" ".join(parts) or os.path.basename(str(path)), []).append(r)
    out = {}
    for label, rs in groups.items():
        out[label] = LearningCurve(
            [int(r["train_step"]) for r in rs], [float(r["mean_len"]) for r in rs],
            [float(r["sem_len"]) for r in rs], [float(r["mean_return"]) for r in rs],
            [float(r["sem_return"]) for r in rs], int(rs[0]["n_runs"]))
    return out
