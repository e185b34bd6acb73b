"""Command-line entry point: ``pbrs {run,audit,solve,surface,plot,transitions}``."""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from .audit import (AuditInput, audit, min_delta_exponential, min_delta_linear,
                    shaping_surface, write_audit_csv, write_surface_csv)
from .core import format_float, read_transitions_csv, run_episode, write_transitions_csv
from .errors import ConfigurationError, ContractViolation, CoverageError
from .experiments import (build_env, build_spec, load_config, read_curve_csv,
                          resolve_bias, run_experiment)
from .oracle import value_iteration, write_solution_csv
from .rng import RngStream
from .svg import Style, emit_svg, merge_series


def _load(args):
    config = load_config(args.config)
    if args.desk_scale:
        config = config.desk_scale()
    if args.seed_offset:
        config = config.with_seed_offset(args.seed_offset)
    if getattr(args, "output", None):
        config = config.replace({"run.output": args.output})
    return config


def _out_path(config, name: str) -> str:
    out_dir = config["run.output"]
    os.makedirs(out_dir, exist_ok=True)
    return os.path.join(out_dir, name)


def cmd_run(args) -> int:
    config = _load(args)
    log = None if args.quiet else (lambda msg: print(msg, file=sys.stderr))
    result = run_experiment(config, progress=log)
    print(f"wrote {config['run.output']}/runs.csv and aggregate.csv")
    for arm, curve in result.aggregates.items():
        print(f"{arm.label}: final mean_len {format_float(curve.mean_len[-1])} "
              f"(sem {format_float(curve.sem_len[-1])}, n_runs {curve.n_runs})")
    for arm, seed, msg in result.excluded:
        print(f"excluded {arm.label} seed={seed}: {msg}")
    return 0


def _audit_spec(config, env):
    q_init = config["audit.q_init"]
    if q_init is None:
        q_init = config["agent.q_init"][0]
    r_inf = config["audit.r_inf"] if config["audit.r_inf"] is not None else env.r_inf
    r_goal = config["audit.r_goal"] if config["audit.r_goal"] is not None else env.r_goal
    # Audit the first shaped setting; "none" entries only matter to training runs.
    tokens = [t for t in config["potential.bias"] if t != "none"] or ["none"]
    bias = resolve_bias(tokens[0], config.gamma, q_init, env.r_inf)
    spec = build_spec(config, env, bias)
    if spec is None:
        raise ConfigurationError("the audit needs a potential (potential.base and a numeric bias)")
    return spec, q_init, r_inf, r_goal


def cmd_audit(args) -> int:
    config = _load(args)
    env = build_env(config)
    spec, q_init, r_inf, r_goal = _audit_spec(config, env)
    transitions = read_transitions_csv(args.transitions)
    report = audit(AuditInput(spec, q_init, r_inf, r_goal, transitions,
                              terminal_is_goal=env.terminal_is_goal))
    path = args.report or _out_path(config, "audit.csv")
    write_audit_csv(path, report, header=config.provenance())
    print(report.summary())
    print(f"wrote {path}")
    return 0


def cmd_solve(args) -> int:
    config = _load(args)
    env = build_env(config)
    if not hasattr(env, "to_mdp"):
        raise ConfigurationError("value iteration needs a tabular environment")
    solution = value_iteration(env.to_mdp(config.gamma), tol=config["solve.tol"])
    path = _out_path(config, "solution.csv")
    write_solution_csv(path, solution, header=config.provenance())
    start = env.config.start_index
    print(f"iterations: {solution.iterations}")
    print(f"residual: {format_float(solution.residual)}")
    print(f"V*(start): {format_float(solution.v_star[start])}")
    print(f"wrote {path}")
    return 0


def cmd_surface(args) -> int:
    config = _load(args)
    gamma = config["surface.gamma"]
    phis = np.linspace(config["surface.phi_min"], config["surface.phi_max"],
                       config["surface.phi_points"])
    deltas = np.linspace(config["surface.delta_min"], config["surface.delta_max"],
                         config["surface.delta_points"])
    bias = config["surface.bias"]
    surfaces = {"linear": shaping_surface(None, gamma, phis, deltas, bias)}
    for base in config["surface.exp_bases"]:
        surfaces[f"exp{format_float(base)}"] = shaping_surface(base, gamma, phis, deltas, bias)
    path = _out_path(config, "surface.csv")
    write_surface_csv(path, surfaces, gamma, header=config.provenance())
    print(f"gamma: {format_float(gamma)}")
    print(f"linear: F < 0 for delta < {format_float((1 - gamma) / gamma)} * Phi(s)"
          f" (e.g. Phi=1: {format_float(min_delta_linear(1.0, gamma))})")
    for base in config["surface.exp_bases"]:
        print(f"exp{format_float(base)}: zero crossing at delta = "
              f"{format_float(min_delta_exponential(base, gamma))}")
    print(f"wrote {path}")
    return 0


def cmd_plot(args) -> int:
    groups = [read_curve_csv(p) for p in args.csv]
    series = merge_series(groups, [os.path.basename(p) for p in args.csv])
    emit_svg(series, args.out, Style(title=args.title or ""))
    print(f"wrote {args.out} ({len(series)} series)")
    return 0


def cmd_transitions(args) -> int:
    config = _load(args)
    env = build_env(config)
    rng = RngStream(config.seeds[0]).spawn("transitions")
    log = []
    for _ in range(args.episodes):
        env.reset(rng)
        log += run_episode(env, lambda s, r: r.integers(env.n_actions), env.max_steps, rng)
    path = args.log or _out_path(config, "transitions.csv")
    write_transitions_csv(path, log)
    print(f"wrote {path} ({len(log)} transitions)")
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--desk-scale", action="store_true",
                        help="apply the desk-scale presets (fewer steps and seeds)")
    common.add_argument("--seed-offset", type=int, default=0,
                        help="add this to every configured seed")
    common.add_argument("--output", help="override run.output")

    p = argparse.ArgumentParser(prog="pbrs", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", parents=[common], help="train every (arm, seed) and aggregate")
    r.add_argument("config")
    r.add_argument("-q", "--quiet", action="store_true")
    r.set_defaults(func=cmd_run)

    a = sub.add_parser("audit", parents=[common], help="first-update audit of a transition log")
    a.add_argument("config")
    a.add_argument("transitions")
    a.add_argument("-o", "--report", help="report CSV path (default: <output>/audit.csv)")
    a.set_defaults(func=cmd_audit)

    s = sub.add_parser("solve", parents=[common], help="value iteration on a tabular task")
    s.add_argument("config")
    s.set_defaults(func=cmd_solve)

    f = sub.add_parser("surface", parents=[common], help="shaping value F over (Phi, delta)")
    f.add_argument("config")
    f.set_defaults(func=cmd_surface)

    pl = sub.add_parser("plot", help="SVG chart of curve CSVs")
    pl.add_argument("csv", nargs="+")
    pl.add_argument("-o", "--out", required=True)
    pl.add_argument("--title")
    pl.set_defaults(func=cmd_plot)

    t = sub.add_parser("transitions", parents=[common],
                       help="log uniformly random episodes for the audit")
    t.add_argument("config")
    t.add_argument("--episodes", type=int, default=1)
    t.add_argument("-o", "--log", help="log path (default: <output>/transitions.csv)")
    t.set_defaults(func=cmd_transitions)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigurationError, ContractViolation, CoverageError, OSError) as exc:
        print(f"pbrs: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
