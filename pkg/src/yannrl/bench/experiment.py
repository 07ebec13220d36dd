"""Controller-versus-controller studies.

A study trains whatever needs training, then evaluates every requested
controller from identical initial states (one shared reset seed per
evaluation run), writing per-run trajectory CSVs and SVG plots, a per-seed
report.csv, and a mean-over-seeds summary.csv.  All outputs land under one
run directory with the resolved configuration copied in.  Runs are
reproducible byte for byte; wall-clock columns stay at zero unless timing is
explicitly enabled, so reports from identical configs compare equal.
"""

import csv
import json
import time

from dataclasses import dataclass, field
from pathlib import Path


from ..envs.base import make_env
from ..explicit_mpc import save_law
from ..nmpc import NmpcConfig, NmpcController
from ..pipeline import design_law
from ..rl import (
    TrainConfig,
    actor_controller,
    build_vanilla_networks,
    law_controller,
    rollout,
    train_ddpg,
    write_episode_log,
)
from ..yann import ResidualSpec, build_yann_actor, build_yann_critic
from .metrics import compute_metrics
from .plots import emit_svg_for_env

CONTROLLERS = ("explicit_mpc", "yann_ddpg", "vanilla_ddpg", "nmpc_oracle")

REPORT_COLUMNS = ["env", "controller", "seed", "ise", "itae", "ess",
                  "cum_cost", "train_episodes", "wall_ms"]


class ConfigError(Exception):
    pass


@dataclass
class ExperimentConfig:
    env_source: object
    out_dir: str
    controllers: list = field(default_factory=lambda: list(CONTROLLERS))
    eval_seeds: list = field(default_factory=lambda: [0, 1, 2, 3, 4])
    train: dict = field(default_factory=dict)
    mpc: dict = field(default_factory=dict)
    ddpg: dict = field(default_factory=dict)
    hidden: tuple = (64, 64)
    record_timing: bool = False

    def __post_init__(self):
        if not self.controllers:
            raise ConfigError("need at least one controller")
        for c in self.controllers:
            if c not in CONTROLLERS:
                raise ConfigError(f"unknown controller {c!r}")
        if len(set(self.eval_seeds)) != len(self.eval_seeds):
            raise ConfigError("evaluation seeds must be distinct")

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        try:
            return cls(
                env_source=d.get("env_config", d.get("env")),
                out_dir=d["out_dir"],
                controllers=list(d.get("controllers", CONTROLLERS)),
                eval_seeds=list(d.get("eval_seeds", [0, 1, 2, 3, 4])),
                train=dict(d.get("train", {})),
                mpc=dict(d.get("mpc", {})),
                ddpg=dict(d.get("ddpg", {})),
                hidden=tuple(d.get("hidden", (64, 64))),
                record_timing=bool(d.get("record_timing", False)),
            )
        except KeyError as exc:
            raise ConfigError(f"missing experiment config key {exc}") from exc

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def resolved_dict(self) -> dict:
        return {
            "env_config": self.env_source if isinstance(self.env_source, str) else "inline",
            "out_dir": self.out_dir,
            "controllers": list(self.controllers),
            "eval_seeds": list(self.eval_seeds),
            "train": self.train,
            "mpc": self.mpc,
            "ddpg": self.ddpg,
            "hidden": list(self.hidden),
            "record_timing": self.record_timing,
        }


@dataclass
class ReportRow:
    env: str
    controller: str
    seed: int
    ise: float
    itae: float
    ess: float
    cum_cost: float
    train_episodes: int
    wall_ms: int

    def as_list(self):
        return [self.env, self.controller, self.seed, repr(float(self.ise)),
                repr(float(self.itae)), repr(float(self.ess)),
                repr(float(self.cum_cost)), self.train_episodes, self.wall_ms]


@dataclass
class ExperimentReport:
    rows: list
    summary: list
    out_dir: str
    train_results: dict = field(default_factory=dict)


def _train_budget(config: ExperimentConfig, env, name: str):
    """(episodes, seed) for a trained controller, config over env defaults."""
    env_train = env.extra.get("train", {})
    defaults = {"yann_ddpg": env_train.get("yann_episodes", 25),
                "vanilla_ddpg": env_train.get("vanilla_episodes", 100)}
    section = config.train.get(name, {})
    episodes = int(section.get("episodes", defaults[name]))
    seed = int(section.get("seed", 0))
    return episodes, seed


def _train_config(config: ExperimentConfig, episodes: int, seed: int) -> TrainConfig:
    kwargs = dict(config.ddpg)
    kwargs.update(episodes=episodes, seed=seed,
                  record_timing=config.record_timing)
    return TrainConfig(**kwargs)


def build_controllers(config: ExperimentConfig, env, out: Path):
    """Train or construct every requested controller.

    Returns {name: (control_factory, train_episodes)} where control_factory
    yields a fresh controller per evaluation run (NMPC warm starts must not
    leak across paired evaluations).
    """
    made = {}
    train_results = {}
    needs_law = any(c in ("explicit_mpc", "yann_ddpg") for c in config.controllers)
    law = form = None
    if needs_law:
        form, cqp, law = design_law(env, N=config.mpc.get("horizon"),
                                    gamma=config.mpc.get("gamma"))
        save_law(law, out / f"law_{env.name}.json")

    for name in config.controllers:
        if name == "explicit_mpc":
            made[name] = (lambda law=law: law_controller(env, law), 0)
        elif name == "nmpc_oracle":
            mpc_cfg = env.extra.get("mpc", {})
            nm_cfg = NmpcConfig(
                N=int(config.mpc.get("horizon", mpc_cfg.get("horizon", 5))),
                gamma=float(config.mpc.get("gamma", mpc_cfg.get("gamma", 0.99))))
            made[name] = (lambda cfg=nm_cfg: NmpcController(env, cfg).control, 0)
        elif name == "yann_ddpg":
            episodes, seed = _train_budget(config, env, name)
            actor = build_yann_actor(law, ResidualSpec(hidden=config.hidden, seed=seed),
                                     *env.norm_input_bounds())
            critic = build_yann_critic(form.system.A, form.system.B, env.Q_w,
                                       env.R, form.P, form.gamma,
                                       ResidualSpec(hidden=config.hidden, seed=seed + 1))
            result = train_ddpg(env, actor, critic,
                                _train_config(config, episodes, seed), mode="yann")
            write_episode_log(result.episodes, out / "episodes_yann_ddpg.csv")
            train_results[name] = result
            made[name] = (lambda r=result: actor_controller(env, r.actor), episodes)
        elif name == "vanilla_ddpg":
            episodes, seed = _train_budget(config, env, name)
            actor, critic = build_vanilla_networks(env, hidden=config.hidden, seed=seed)
            result = train_ddpg(env, actor, critic,
                                _train_config(config, episodes, seed), mode="vanilla")
            write_episode_log(result.episodes, out / "episodes_vanilla_ddpg.csv")
            train_results[name] = result
            made[name] = (lambda r=result: actor_controller(env, r.actor), episodes)
    return made, train_results


def run_experiment(config: ExperimentConfig) -> ExperimentReport:
    env = make_env(config.env_source)
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "config.json", "w") as fh:
        json.dump(config.resolved_dict(), fh, indent=1, sort_keys=True)

    made, train_results = build_controllers(config, env, out)

    rows = []
    for name in config.controllers:
        factory, episodes = made[name]
        for seed in config.eval_seeds:
            x0 = env.reset(int(seed))
            control = factory()
            t0 = time.perf_counter() if config.record_timing else 0.0
            traj = rollout(env, control, x0)
            wall = (int(round((time.perf_counter() - t0) * 1e3))
                    if config.record_timing else 0)
            m = compute_metrics(traj.states, traj.costs, env.x_sp, env.dt,
                                env.tracked_states)
            run_dir = out / "runs" / name / f"seed{seed}"
            run_dir.mkdir(parents=True, exist_ok=True)
            traj.to_csv(run_dir / "trajectory.csv")
            emit_svg_for_env(traj, env, run_dir / "trajectory.svg",
                             title=f"{env.name}: {name} (seed {seed})")
            solver = getattr(control, "__self__", None)
            if name == "nmpc_oracle" and solver is not None:
                with open(run_dir / "sqp_iterations.csv", "w", newline="") as fh:
                    writer = csv.writer(fh)
                    writer.writerow(["step", "sqp_iterations"])
                    for k, it in enumerate(solver.iterations_per_step):
                        writer.writerow([k, it])
            rows.append(ReportRow(env.name, name, int(seed), m.ise, m.itae,
                                  m.ess, m.cum_cost, episodes, wall))

    write_report(rows, out / "report.csv")
    summary = summarize(rows)
    write_summary(summary, out / "summary.csv")
    return ExperimentReport(rows, summary, str(out), train_results)


def write_report(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(REPORT_COLUMNS)
        for row in rows:
            writer.writerow(row.as_list())


def read_report(path) -> list:
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for rec in reader:
            rows.append(ReportRow(rec["env"], rec["controller"], int(rec["seed"]),
                                  float(rec["ise"]), float(rec["itae"]),
                                  float(rec["ess"]), float(rec["cum_cost"]),
                                  int(rec["train_episodes"]), int(rec["wall_ms"])))
    return rows


def summarize(rows) -> list:
    """Mean metrics per controller, in first-appearance order."""
    order = []
    grouped = {}
    for row in rows:
        key = (row.env, row.controller)
        if key not in grouped:
            order.append(key)
            grouped[key] = []
        grouped[key].append(row)
    summary = []
    for env_name, controller in order:
        group = grouped[(env_name, controller)]
        k = len(group)
        summary.append({
            "env": env_name,
            "controller": controller,
            "seeds": k,
            "ise": sum(r.ise for r in group) / k,
            "itae": sum(r.itae for r in group) / k,
            "ess": sum(r.ess for r in group) / k,
            "cum_cost": sum(r.cum_cost for r in group) / k,
            "train_episodes": group[0].train_episodes,
        })
    return summary


def write_summary(summary, path) -> None:
    cols = ["env", "controller", "seeds", "ise", "itae", "ess", "cum_cost",
            "train_episodes"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(cols)
        for rec in summary:
            writer.writerow([rec["env"], rec["controller"], rec["seeds"],
                             repr(float(rec["ise"])), repr(float(rec["itae"])),
                             repr(float(rec["ess"])), repr(float(rec["cum_cost"])),
                             rec["train_episodes"]])


def regenerate_report(out_dir) -> list:
    """Rebuild summary.csv and the SVG plots from a finished run directory."""
    from ..rl import Trajectory

    out = Path(out_dir)
    rows = read_report(out / "report.csv")
    summary = summarize(rows)
    write_summary(summary, out / "summary.csv")
    with open(out / "config.json") as fh:
        cfg = json.load(fh)
    env = make_env(cfg["env_config"]) if cfg["env_config"] != "inline" else None
    if env is not None:
        for row in rows:
            run_dir = out / "runs" / row.controller / f"seed{row.seed}"
            csv_path = run_dir / "trajectory.csv"
            if csv_path.exists():
                traj = Trajectory.from_csv(csv_path)
                emit_svg_for_env(traj, env, run_dir / "trajectory.svg",
                                 title=f"{env.name}: {row.controller} (seed {row.seed})")
    return summary
