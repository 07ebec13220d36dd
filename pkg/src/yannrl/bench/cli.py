"""Command line for the study harness.

Subcommands:
    bench run <config.json>        full controller study into a run directory
    bench mpqp <env-config>        solve an explicit law offline and save it
    bench validate <law> <env>     check a saved law against the online QP
    bench report <dir>             rebuild summary and plots from a run

Exit codes: 0 success, 1 configuration error, 2 runtime failure.
"""

import argparse
import json
import sys

import numpy as np

from ..envs.base import make_env
from ..explicit_mpc import condense, evaluate_pwa_nearest, load_law, online_mpc, save_law
from ..pipeline import design_formulation, design_law
from .experiment import ConfigError, ExperimentConfig, run_experiment


def _cmd_run(args) -> int:
    config = ExperimentConfig.from_file(args.config)
    if args.out:
        config.out_dir = args.out
    if args.episodes is not None:
        for name in ("yann_ddpg", "vanilla_ddpg"):
            config.train.setdefault(name, {})["episodes"] = args.episodes
    if args.seed is not None:
        for name in ("yann_ddpg", "vanilla_ddpg"):
            config.train.setdefault(name, {})["seed"] = args.seed
    report = run_experiment(config)
    for rec in report.summary:
        print(f"{rec['env']:12s} {rec['controller']:14s} "
              f"ise={rec['ise']:.6g} itae={rec['itae']:.6g} "
              f"ess={rec['ess']:.6g} cum_cost={rec['cum_cost']:.6g}")
    print(f"report written to {report.out_dir}")
    return 0


def _cmd_mpqp(args) -> int:
    env = make_env(args.env_config)
    form, cqp, law = design_law(env, N=args.horizon, gamma=args.gamma)
    save_law(law, args.out)
    print(f"{len(law)} regions over horizon {form.N} "
          f"(hash {law.metadata['formulation_hash'][:12]}) -> {args.out}")
    return 0


def _cmd_validate(args) -> int:
    env = make_env(args.env_config)
    law = load_law(args.law)
    form = design_formulation(env)
    if law.metadata.get("formulation_hash") != form.digest():
        print("warning: law was built from a different formulation", file=sys.stderr)
    cqp = condense(form)
    rng = np.random.default_rng(args.seed)
    worst = 0.0
    for _ in range(args.samples):
        x = rng.uniform(form.domain_lo, form.domain_hi)
        u_law = evaluate_pwa_nearest(law, x)
        u_online = online_mpc(cqp, x)
        worst = max(worst, float(np.max(np.abs(u_law - u_online))))
    print(f"max deviation over {args.samples} samples: {worst:.3e}")
    if worst > args.tolerance:
        print(f"FAIL: deviation above {args.tolerance:.1e}", file=sys.stderr)
        return 2
    print("OK")
    return 0


def _cmd_report(args) -> int:
    from .experiment import regenerate_report

    summary = regenerate_report(args.dir)
    for rec in summary:
        print(f"{rec['env']:12s} {rec['controller']:14s} "
              f"ise={rec['ise']:.6g} itae={rec['itae']:.6g} "
              f"ess={rec['ess']:.6g} cum_cost={rec['cum_cost']:.6g}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bench",
                                     description="controller study harness")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a controller study")
    p_run.add_argument("config", help="experiment config JSON")
    p_run.add_argument("--out", help="override the output directory")
    p_run.add_argument("--seed", type=int, help="override training seeds")
    p_run.add_argument("--episodes", type=int, help="override training episodes")
    p_run.set_defaults(func=_cmd_run)

    p_mpqp = sub.add_parser("mpqp", help="solve an explicit law offline")
    p_mpqp.add_argument("env_config", help="environment name or config path")
    p_mpqp.add_argument("-o", "--out", required=True, help="law output path")
    p_mpqp.add_argument("--horizon", type=int, default=None)
    p_mpqp.add_argument("--gamma", type=float, default=None)
    p_mpqp.set_defaults(func=_cmd_mpqp)

    p_val = sub.add_parser("validate", help="compare a saved law to the online QP")
    p_val.add_argument("law", help="law JSON path")
    p_val.add_argument("env_config", help="environment name or config path")
    p_val.add_argument("--samples", type=int, default=10000)
    p_val.add_argument("--seed", type=int, default=0)
    p_val.add_argument("--tolerance", type=float, default=1e-6)
    p_val.set_defaults(func=_cmd_validate)

    p_rep = sub.add_parser("report", help="rebuild summary and plots")
    p_rep.add_argument("dir", help="run directory")
    p_rep.set_defaults(func=_cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError, json.JSONDecodeError, KeyError,
            ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
