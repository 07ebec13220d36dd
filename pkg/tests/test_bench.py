import json

from pathlib import Path

import matplotlib
import numpy as np
import pytest

from yannrl.bench.cli import main as cli_main
from yannrl.bench.experiment import (
    ConfigError,
    ExperimentConfig,
    run_experiment,
    summarize,
)
from yannrl.bench.metrics import Metrics, compute_metrics
from yannrl.bench.plots import emit_svg_for_env, emit_svg_timeseries
from yannrl.envs import make_env
from yannrl.numerics import lqr_gain
from yannrl.rl import Trajectory

GOLDEN = Path(__file__).parent / "golden"


def linear_env_config(tmp_path) -> Path:
    cfg = {
        "env": "linear",
        "params": {"A_c": [[-0.5, 0.1], [0.0, -0.8]], "B_c": [[0.4], [0.6]]},
        "setpoint": [0.0, 0.0], "steady_input": [0.0],
        "input_box": {"low": [-1.0], "high": [1.0]},
        "state_box": {"low": [-2.0, -2.0], "high": [2.0, 2.0]},
        "reset_box": {"low": [-0.5, -0.5], "high": [0.5, 0.5]},
        "dt_minutes": 0.2, "horizon_minutes": 4.0, "n_sub": 10,
        "infeasibility_margin": 10.0,
        "mpc": {"horizon": 3, "gamma": 0.99},
        "train": {"yann_episodes": 1, "vanilla_episodes": 1},
    }
    path = tmp_path / "linear_env.json"
    path.write_text(json.dumps(cfg))
    return path


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------

def test_metrics_zero_error_trajectory():
    states = np.zeros((5, 2))
    costs = np.full(5, 0.25)  # pure input-deviation cost
    m = compute_metrics(states, costs, np.zeros(2), dt=0.5)
    assert m.ise == 0.0 and m.itae == 0.0 and m.ess == 0.0
    assert m.cum_cost == pytest.approx(1.25)


def test_metrics_constant_error_arithmetic():
    # error 1 at t = 0, 1, 2, 3 with dt = 1: ISE = 4, ITAE = 0+1+2+3, eSS = 1
    states = np.ones((4, 1))
    costs = np.zeros(4)
    m = compute_metrics(states, costs, np.zeros(1), dt=1.0)
    assert m.ise == pytest.approx(4.0)
    assert m.itae == pytest.approx(6.0)
    assert m.ess == pytest.approx(1.0)


def test_metrics_appending_settled_steps():
    rng = np.random.default_rng(0)
    states = rng.normal(size=(10, 2))
    costs = rng.uniform(0, 1, size=10)
    base = compute_metrics(states, costs, np.zeros(2), dt=1.0)
    settled = np.vstack([states, np.zeros((10, 2))])
    costs2 = np.concatenate([costs, np.zeros(10)])
    extended = compute_metrics(settled, costs2, np.zeros(2), dt=1.0)
    assert extended.ise == pytest.approx(base.ise)
    assert extended.itae == pytest.approx(base.itae)
    assert extended.ess <= base.ess
    assert extended.cum_cost == pytest.approx(base.cum_cost)


def test_metrics_tracked_subset():
    states = np.column_stack([np.ones(4), np.full(4, 9.0)])
    m = compute_metrics(states, np.zeros(4), np.zeros(2), dt=1.0, tracked=[0])
    assert m.ise == pytest.approx(4.0)


def test_metrics_validation():
    with pytest.raises(ValueError):
        Metrics(ise=-1.0, itae=0.0, ess=0.0, cum_cost=0.0)
    with pytest.raises(ValueError):
        compute_metrics(np.zeros((0, 1)), np.zeros(0), np.zeros(1), 1.0)


def test_golden_metrics_recompute_bit_identically():
    traj = Trajectory.from_csv(GOLDEN / "cstr_nmpc_trajectory.csv")
    env = make_env("cstr")
    m = compute_metrics(traj.states, traj.costs, env.x_sp, env.dt,
                        env.tracked_states)
    stored = json.loads((GOLDEN / "cstr_nmpc_metrics.json").read_text())
    assert repr(float(m.ise)) == stored["ise"]
    assert repr(float(m.itae)) == stored["itae"]
    assert repr(float(m.ess)) == stored["ess"]
    assert repr(float(m.cum_cost)) == stored["cum_cost"]


# ---------------------------------------------------------------------------
# plots
# ---------------------------------------------------------------------------

def test_svg_deterministic_bytes(tmp_path):
    traj = Trajectory.from_csv(GOLDEN / "cstr_nmpc_trajectory.csv")
    env = make_env("cstr")
    a, b = tmp_path / "a.svg", tmp_path / "b.svg"
    emit_svg_for_env(traj, env, a, title="golden")
    emit_svg_for_env(traj, env, b, title="golden")
    assert a.read_bytes() == b.read_bytes()


def test_svg_matches_golden_bytes(tmp_path):
    # rendered bytes are pinned to the renderer release recorded beside the
    # golden; on that release the file must reproduce exactly
    recorded = (GOLDEN / "matplotlib_version.txt").read_text().strip()
    if matplotlib.__version__ != recorded:
        pytest.xfail(f"golden rendered with matplotlib {recorded}, "
                     f"running {matplotlib.__version__}")
    traj = Trajectory.from_csv(GOLDEN / "cstr_nmpc_trajectory.csv")
    env = make_env("cstr")
    out = tmp_path / "render.svg"
    emit_svg_for_env(traj, env, out, title="cstr: nmpc_oracle golden")
    assert out.read_bytes() == (GOLDEN / "cstr_nmpc_trajectory.svg").read_bytes()


def test_svg_empty_trajectory_axes_only(tmp_path):
    traj = Trajectory(np.zeros(0), np.zeros((0, 2)), np.zeros((0, 1)),
                      np.zeros(0), infeasible=False)
    out = tmp_path / "empty.svg"
    emit_svg_timeseries(traj, np.zeros(2), (np.array([-1.0]), np.array([1.0])), out)
    text = out.read_text()
    assert text.startswith("<?xml")
    assert "</svg>" in text
    assert 'id="state-x1' not in text  # no data series drawn


def test_svg_bound_lines_twice_per_channel(tmp_path):
    traj = Trajectory.from_csv(GOLDEN / "cstr_nmpc_trajectory.csv")
    env = make_env("cstr")
    out = tmp_path / "plot.svg"
    emit_svg_for_env(traj, env, out)
    text = out.read_text()
    for j in range(env.n_inputs):
        assert text.count(f'id="bound-u{j + 1}-lo"') == 1
        assert text.count(f'id="bound-u{j + 1}-hi"') == 1
    for i in range(env.n_states):
        assert text.count(f'id="setpoint-x{i + 1}"') == 1


# ---------------------------------------------------------------------------
# experiments
# ---------------------------------------------------------------------------

def test_summarize_means_match_hand_average():
    from yannrl.bench.experiment import ReportRow

    rows = [ReportRow("e", "c", 0, 1.0, 2.0, 3.0, 4.0, 5, 0),
            ReportRow("e", "c", 1, 3.0, 6.0, 5.0, 8.0, 5, 0)]
    summary = summarize(rows)
    assert summary[0]["ise"] == pytest.approx(2.0)
    assert summary[0]["itae"] == pytest.approx(4.0)
    assert summary[0]["ess"] == pytest.approx(4.0)
    assert summary[0]["cum_cost"] == pytest.approx(6.0)


def test_config_validation():
    with pytest.raises(ConfigError):
        ExperimentConfig(env_source="cstr", out_dir="x", controllers=[])
    with pytest.raises(ConfigError):
        ExperimentConfig(env_source="cstr", out_dir="x", controllers=["bogus"])
    with pytest.raises(ConfigError):
        ExperimentConfig(env_source="cstr", out_dir="x", eval_seeds=[1, 1])


def test_experiment_linear_lqr_closed_loop_analytic(tmp_path):
    # oracle: rebuild the RK4 substep matrices of the linear plant and the
    # law's LQR gain independently, roll the closed loop by matrix arithmetic,
    # and apply the metric formulas directly
    env_path = linear_env_config(tmp_path)
    config = ExperimentConfig(env_source=str(env_path),
                              out_dir=str(tmp_path / "run"),
                              controllers=["explicit_mpc"],
                              eval_seeds=[0, 1])
    report = run_experiment(config)

    env = make_env(str(env_path))
    from math import factorial

    A_c = np.array([[-0.5, 0.1], [0.0, -0.8]])
    B_c = np.array([[0.4], [0.6]])
    h = env.dt / env.n_sub
    # one RK4 substep of a linear system is the degree-4 Taylor flow
    Phi = sum((np.linalg.matrix_power(A_c * h, k) / factorial(k) for k in range(5)),
              start=np.zeros((2, 2)))
    Gam = sum((np.linalg.matrix_power(A_c, k) @ B_c * h ** (k + 1) / factorial(k + 1)
               for k in range(4)), start=np.zeros((2, 1)))
    Phi_tot = np.linalg.matrix_power(Phi, env.n_sub)
    Gam_tot = np.zeros((2, 1))
    for j in range(env.n_sub):
        Gam_tot = Gam_tot + np.linalg.matrix_power(Phi, j) @ Gam

    from yannrl.pipeline import design_formulation
    form = design_formulation(env)
    K_norm, _ = lqr_gain(form.system.A, form.system.B, env.Q_w, env.R, form.gamma)
    Dx = np.diag(env.state_box.width)
    Du = np.diag(env.input_box.width)
    K_phys = Du @ K_norm @ np.linalg.inv(Dx)

    for row in report.rows:
        x = env.reset(row.seed)
        ise = itae = cum = 0.0
        errs = []
        for t in range(env.episode_steps):
            u = np.clip(K_phys @ x, env.input_box.low, env.input_box.high)
            errs.append(np.sum(np.abs(x)))
            ise += float(x @ x) * env.dt
            itae += (t * env.dt) * float(np.sum(np.abs(x))) * env.dt
            cum += env.stage_cost(x, u)
            x = Phi_tot @ x + Gam_tot @ u
        n_tail = max(1, int(np.ceil(0.1 * env.episode_steps)))
        ess = float(np.mean(errs[-n_tail:]))
        assert abs(row.ise - ise) < 1e-6
        assert abs(row.itae - itae) < 1e-6
        assert abs(row.ess - ess) < 1e-6
        assert abs(row.cum_cost - cum) < 1e-6


def test_experiment_paired_seeds_and_outputs(tmp_path):
    env_path = linear_env_config(tmp_path)
    out = tmp_path / "paired"
    config = ExperimentConfig(env_source=str(env_path), out_dir=str(out),
                              controllers=["explicit_mpc", "nmpc_oracle"],
                              eval_seeds=[3, 7])
    run_experiment(config)
    for seed in (3, 7):
        first_states = []
        for name in ("explicit_mpc", "nmpc_oracle"):
            csv_path = out / "runs" / name / f"seed{seed}" / "trajectory.csv"
            traj = Trajectory.from_csv(csv_path)
            first_states.append(traj.states[0])
            assert (out / "runs" / name / f"seed{seed}" / "trajectory.svg").exists()
        assert np.array_equal(first_states[0], first_states[1])
    assert (out / "config.json").exists()
    assert (out / "report.csv").exists()
    assert (out / "summary.csv").exists()


def test_experiment_rerun_bit_identical(tmp_path):
    env_path = linear_env_config(tmp_path)
    config_a = ExperimentConfig(env_source=str(env_path),
                                out_dir=str(tmp_path / "a"),
                                controllers=["explicit_mpc", "yann_ddpg"],
                                eval_seeds=[0, 1],
                                train={"yann_ddpg": {"episodes": 1, "seed": 0}},
                                ddpg={"batch_size": 8})
    config_b = ExperimentConfig(env_source=str(env_path),
                                out_dir=str(tmp_path / "b"),
                                controllers=["explicit_mpc", "yann_ddpg"],
                                eval_seeds=[0, 1],
                                train={"yann_ddpg": {"episodes": 1, "seed": 0}},
                                ddpg={"batch_size": 8})
    run_experiment(config_a)
    run_experiment(config_b)
    assert ((tmp_path / "a" / "report.csv").read_bytes()
            == (tmp_path / "b" / "report.csv").read_bytes())


# ---------------------------------------------------------------------------
# CLI
# ---------------------------------------------------------------------------

def test_cli_mpqp_validate_cycle(tmp_path):
    env_path = linear_env_config(tmp_path)
    law_path = tmp_path / "law.json"
    assert cli_main(["mpqp", str(env_path), "-o", str(law_path)]) == 0
    assert law_path.exists()
    assert cli_main(["validate", str(law_path), str(env_path),
                     "--samples", "200"]) == 0


def test_cli_run_and_report(tmp_path, capsys):
    env_path = linear_env_config(tmp_path)
    exp = {
        "env_config": str(env_path),
        "out_dir": str(tmp_path / "study"),
        "controllers": ["explicit_mpc"],
        "eval_seeds": [0],
    }
    exp_path = tmp_path / "exp.json"
    exp_path.write_text(json.dumps(exp))
    assert cli_main(["run", str(exp_path)]) == 0
    assert cli_main(["report", str(tmp_path / "study")]) == 0
    out = capsys.readouterr().out
    assert "explicit_mpc" in out


def test_cli_error_codes(tmp_path):
    assert cli_main(["run", str(tmp_path / "missing.json")]) == 1
    bad = tmp_path / "bad.json"
    bad.write_text("{not valid json")
    assert cli_main(["run", str(bad)]) == 1
    # validation failure against a law from a different formulation
    env_path = linear_env_config(tmp_path)
    law_path = tmp_path / "law.json"
    cli_main(["mpqp", str(env_path), "-o", str(law_path), "--horizon", "2"])
    rc = cli_main(["validate", str(law_path), str(env_path),
                   "--samples", "100", "--tolerance", "1e-12"])
    assert rc in (0, 2)
