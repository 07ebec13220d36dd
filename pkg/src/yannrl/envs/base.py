"""Environment contract shared by the process models.

An environment is a nonlinear ODE with box-bounded inputs, a setpoint and
matching steady input, a quadratic stage cost on normalized deviations, and a
seeded uniform reset distribution.  Stepping integrates the ODE with fixed-step
RK4 substeps; a state leaving the validity box by more than the configured
margin is an infeasible-operating-point event that ends the episode.
"""

import json
from dataclasses import dataclass
from importlib import resources

import numpy as np

from ..numerics import check_finite, discretize_zoh, jacobian_fd, rk4_step


class DomainError(Exception):
    """Dynamics evaluated outside their physical domain."""


@dataclass(frozen=True)
class Box:
    low: np.ndarray
    high: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "low", np.asarray(self.low, dtype=float))
        object.__setattr__(self, "high", np.asarray(self.high, dtype=float))
        if self.low.shape != self.high.shape:
            raise ValueError("box bounds must share a shape")
        if np.any(self.low >= self.high):
            raise ValueError("box must have low < high elementwise")

    @property
    def width(self) -> np.ndarray:
        return self.high - self.low

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.low + self.high)

    def clip(self, x) -> np.ndarray:
        return np.clip(x, self.low, self.high)

    def contains(self, x, margin=0.0) -> bool:
        return bool(np.all(x >= self.low - margin) and np.all(x <= self.high + margin))

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        return rng.uniform(self.low, self.high)


class StepResult:
    """Next state plus whether it left the validity box."""

    __slots__ = ("state", "infeasible")

    def __init__(self, state, infeasible):
        self.state = state
        self.infeasible = infeasible


class ProcessEnv:
    """Base environment.  Subclasses provide dynamics(x, u) and a name."""

    name = "process"

    def __init__(self, params, input_box: Box, state_box: Box, reset_box: Box,
                 x_sp, u_ss, dt: float, horizon_minutes: float, n_sub: int = 10,
                 time_scale: float = 1.0, q_weight=None, r_weight=None,
                 tracked_states=None, noise_sigma=None,
                 infeasibility_margin: float = 0.0, extra=None):
        self.params = params
        self.input_box = input_box
        self.state_box = state_box
        self.reset_box = reset_box
        self.x_sp = check_finite(x_sp, "setpoint")
        self.u_ss = check_finite(u_ss, "steady input")
        if dt <= 0 or horizon_minutes < dt:
            raise ValueError("need dt > 0 and horizon >= dt")
        self.dt = float(dt)
        self.horizon_minutes = float(horizon_minutes)
        self.n_sub = int(n_sub)
        self.time_scale = float(time_scale)  # ODE time units per minute
        n, m = self.x_sp.size, self.u_ss.size
        self.Q_w = np.eye(n) if q_weight is None else np.atleast_2d(np.asarray(q_weight, dtype=float))
        self.R = np.eye(m) if r_weight is None else np.atleast_2d(np.asarray(r_weight, dtype=float))
        self.tracked_states = tuple(range(n)) if tracked_states is None else tuple(tracked_states)
        self.noise_sigma = None if noise_sigma is None else np.asarray(noise_sigma, dtype=float)
        # absolute margin outside the state box before an episode is cut
        self.infeasibility_margin = float(infeasibility_margin) * state_box.width
        self.extra = dict(extra or {})
        if not state_box.contains(self.x_sp):
            raise ValueError("setpoint must lie inside the state box")

    # -- to be provided by subclasses ----------------------------------------

    def dynamics(self, x, u) -> np.ndarray:
        raise NotImplementedError

    def project_state(self, x) -> np.ndarray:
        """Pull a state back onto its physical domain after a substep."""
        return x

    # -- dimensions -----------------------------------------------------------

    @property
    def n_states(self) -> int:
        return self.x_sp.size

    @property
    def n_inputs(self) -> int:
        return self.u_ss.size

    @property
    def episode_steps(self) -> int:
        return int(round(self.horizon_minutes / self.dt))

    # -- normalization ----------------------------------------------------------

    def norm_state(self, x) -> np.ndarray:
        return (np.asarray(x, dtype=float) - self.x_sp) / self.state_box.width

    def denorm_state(self, xn) -> np.ndarray:
        return self.x_sp + np.asarray(xn, dtype=float) * self.state_box.width

    def norm_input(self, u) -> np.ndarray:
        return (np.asarray(u, dtype=float) - self.u_ss) / self.input_box.width

    def denorm_input(self, un) -> np.ndarray:
        return self.u_ss + np.asarray(un, dtype=float) * self.input_box.width

    def norm_input_bounds(self):
        lo = (self.input_box.low - self.u_ss) / self.input_box.width
        hi = (self.input_box.high - self.u_ss) / self.input_box.width
        return lo, hi

    # -- contract operations ----------------------------------------------------

    def step(self, x, u, rng: np.random.Generator | None = None) -> StepResult:
        """Advance one control interval of dt minutes.

        The input is clamped to its box and held constant; the ODE runs n_sub
        RK4 substeps in its own time unit.  Additive Gaussian state noise is
        applied only when the environment carries a noise level and a
        generator is passed.
        """
        u = self.input_box.clip(np.asarray(u, dtype=float))
        h = self.dt * self.time_scale / self.n_sub
        xs = np.asarray(x, dtype=float)
        for _ in range(self.n_sub):
            xs = rk4_step(self.dynamics, xs, u, h)
            xs = self.project_state(xs)
        if self.noise_sigma is not None and rng is not None:
            xs = self.project_state(xs + rng.normal(size=xs.shape) * self.noise_sigma)
        infeasible = not self.state_box.contains(xs, self.infeasibility_margin)
        return StepResult(xs, infeasible)

    def reset(self, seed) -> np.ndarray:
        rng = np.random.default_rng(seed)
        return self.reset_box.sample(rng)

    def stage_cost(self, x, u) -> float:
        e = self.norm_state(x)
        v = self.norm_input(u)
        return float(e @ self.Q_w @ e + v @ self.R @ v)

    # -- linearization ------------------------------------------------------------

    def continuous_jacobian(self):
        """Physical-coordinate Jacobians of the ODE at the operating point."""
        return jacobian_fd(self.dynamics, self.x_sp, self.u_ss)

    def linearized_discrete(self):
        """Discrete (A, B) over one control interval in normalized deviations."""
        A_c, B_c = self.continuous_jacobian()
        A, B = discretize_zoh(A_c, B_c, self.dt * self.time_scale)
        dx = self.state_box.width
        du = self.input_box.width
        A_n = A * (1.0 / dx)[:, None] * dx[None, :]
        B_n = B * (1.0 / dx)[:, None] * du[None, :]
        return A_n, B_n


# ---------------------------------------------------------------------------
# configuration files
# ---------------------------------------------------------------------------

def _load_builtin(name: str) -> dict:
    ref = resources.files("yannrl.envs").joinpath("configs", f"{name}.json")
    with ref.open() as fh:
        return json.load(fh)


def load_env_config(source) -> dict:
    """Read an environment config from a builtin name or a JSON file path."""
    name = str(source)
    if name in ("cstr", "fourtank", "extraction"):
        return _load_builtin(name)
    with open(name) as fh:
        return json.load(fh)


def make_env(source) -> ProcessEnv:
    """Build an environment from a builtin name, config path, or config dict."""
    from .cstr import CstrEnv
    from .extraction import ExtractionEnv
    from .fourtank import FourTankEnv
    from .linear import LinearEnv

    cfg = source if isinstance(source, dict) else load_env_config(source)
    kinds = {"cstr": CstrEnv, "fourtank": FourTankEnv,
             "extraction": ExtractionEnv, "linear": LinearEnv}
    kind = cfg.get("env")
    if kind not in kinds:
        raise ValueError(f"unknown environment kind {kind!r}")
    return kinds[kind].from_config(cfg)


def common_kwargs(cfg: dict) -> dict:
    """Shared constructor arguments pulled out of a config dict."""
    return dict(
        input_box=Box(cfg["input_box"]["low"], cfg["input_box"]["high"]),
        state_box=Box(cfg["state_box"]["low"], cfg["state_box"]["high"]),
        reset_box=Box(cfg["reset_box"]["low"], cfg["reset_box"]["high"]),
        x_sp=cfg["setpoint"],
        u_ss=cfg["steady_input"],
        dt=cfg["dt_minutes"],
        horizon_minutes=cfg["horizon_minutes"],
        n_sub=cfg.get("n_sub", 10),
        time_scale=cfg.get("ode_time_scale", 1.0),
        q_weight=cfg.get("q_weight"),
        r_weight=cfg.get("r_weight"),
        tracked_states=cfg.get("tracked_states"),
        noise_sigma=cfg.get("noise_sigma"),
        infeasibility_margin=cfg.get("infeasibility_margin", 0.0),
        extra={k: cfg[k] for k in ("mpc", "train", "seed") if k in cfg},
    )
