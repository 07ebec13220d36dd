"""Nonlinear MPC by sequential linearization.

Each solve iterates: roll the true ODE under the current input sequence,
linearize the dynamics at every knot (finite-difference Jacobians, exact
zero-order hold), condense the resulting time-varying model into a dense QP
for the input correction, and backtrack on the true nonlinear horizon cost.
The terminal weight is the discounted Riccati solution at the setpoint, the
weights are the environment's, and everything runs in normalized deviation
coordinates, so on a truly linear plant one iteration reproduces the linear
MPC move.
"""

from dataclasses import dataclass

import numpy as np

from .envs.base import DomainError, ProcessEnv
from .numerics import (
    IntegrationError,
    Qp,
    discretize_zoh,
    jacobian_fd,
    qp_solve,
    rk4_step,
    solve_dare,
)


@dataclass(frozen=True)
class NmpcConfig:
    N: int = 5
    gamma: float = 0.99
    max_sqp_iter: int = 20
    step_tol: float = 1e-6       # convergence on the applied input change
    ls_shrink: float = 0.5
    ls_max_steps: int = 30

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("horizon must be at least 1")
        if self.step_tol <= 0:
            raise ValueError("step tolerance must be positive")


@dataclass
class NmpcSolution:
    u0: np.ndarray          # first physical input move
    U: np.ndarray           # full normalized input sequence (N*m)
    iterations: int
    cost: float
    stalled: bool
    cost_trace: list = None  # accepted cost after each iteration


class NmpcController:
    """Receding-horizon solver with shift-and-hold warm starting."""

    def __init__(self, env: ProcessEnv, config: NmpcConfig | None = None):
        self.env = env
        if config is None:
            mpc_cfg = env.extra.get("mpc", {})
            config = NmpcConfig(N=int(mpc_cfg.get("horizon", 5)),
                                gamma=float(mpc_cfg.get("gamma", 0.99)))
        self.config = config
        A, B = env.linearized_discrete()
        self.P = solve_dare(A, B, env.Q_w, env.R, config.gamma)
        self.u_lo, self.u_hi = env.norm_input_bounds()
        self._warm: np.ndarray | None = None
        self.iterations_per_step: list[int] = []

    # -- plumbing ---------------------------------------------------------------

    def _step_true(self, x, u_norm):
        """One control interval of the true ODE under a normalized input."""
        env = self.env
        u = env.denorm_input(u_norm)
        h = env.dt * env.time_scale / env.n_sub
        for _ in range(env.n_sub):
            x = rk4_step(env.dynamics, x, u, h)
            x = env.project_state(x)
        return x

    def _rollout(self, x0, U):
        """Physical knot states x_0..x_N under stacked normalized inputs."""
        m = self.env.n_inputs
        xs = [np.asarray(x0, dtype=float)]
        for t in range(self.config.N):
            xs.append(self._step_true(xs[-1], U[t * m:(t + 1) * m]))
        return xs

    def horizon_cost(self, x0, U) -> float:
        """True discounted horizon cost; infinite if the prediction blows up."""
        env, cfg = self.env, self.config
        try:
            xs = self._rollout(x0, U)
        except (DomainError, IntegrationError):
            return np.inf
        if not all(np.all(np.isfinite(x)) for x in xs):
            return np.inf
        m = env.n_inputs
        total = 0.0
        for t in range(cfg.N):
            xn = env.norm_state(xs[t])
            un = U[t * m:(t + 1) * m]
            total += cfg.gamma ** t * (xn @ env.Q_w @ xn + un @ env.R @ un)
        xN = env.norm_state(xs[-1])
        total += cfg.gamma ** cfg.N * (xN @ self.P @ xN)
        return float(total)

    def _linearize_knots(self, xs, U):
        """Normalized discrete (A_t, B_t) at every knot of the nominal."""
        env = self.env
        m = env.n_inputs
        dx = env.state_box.width
        du = env.input_box.width
        mats = []
        for t in range(self.config.N):
            u_phys = env.denorm_input(U[t * m:(t + 1) * m])
            A_c, B_c = jacobian_fd(env.dynamics, xs[t], u_phys)
            A, B = discretize_zoh(A_c, B_c, env.dt * env.time_scale)
            A_n = A * (1.0 / dx)[:, None] * dx[None, :]
            B_n = B * (1.0 / dx)[:, None] * du[None, :]
            mats.append((A_n, B_n))
        return mats

    def _correction_qp(self, xs, U, mats):
        """Dense QP in the input correction dU around the nominal."""
        env, cfg = self.env, self.config
        n, m, N = env.n_states, env.n_inputs, cfg.N
        # sensitivity blocks: dx_t = sum_j Phi(t, j) B_j dU_j
        Bbar = np.zeros((N * n, N * m))
        for t in range(1, N + 1):
            A_prev, B_prev = mats[t - 1]
            if t > 1:
                Bbar[(t - 1) * n:t * n, :(t - 1) * m] = A_prev @ Bbar[(t - 2) * n:(t - 1) * n, :(t - 1) * m]
            Bbar[(t - 1) * n:t * n, (t - 1) * m:t * m] = B_prev

        Qbar = np.zeros((N * n, N * n))
        for t in range(1, N):
            Qbar[(t - 1) * n:t * n, (t - 1) * n:t * n] = cfg.gamma ** t * env.Q_w
        Qbar[(N - 1) * n:, (N - 1) * n:] = cfg.gamma ** N * self.P
        Rbar = np.zeros((N * m, N * m))
        for t in range(N):
            Rbar[t * m:(t + 1) * m, t * m:(t + 1) * m] = cfg.gamma ** t * env.R

        x_stack = np.concatenate([env.norm_state(xs[t]) for t in range(1, N + 1)])
        H = 2.0 * (Rbar + Bbar.T @ Qbar @ Bbar)
        f = 2.0 * (Bbar.T @ Qbar @ x_stack + Rbar @ U)
        G = np.vstack([np.eye(N * m), -np.eye(N * m)])
        w = np.concatenate([np.tile(self.u_hi, N) - U, U - np.tile(self.u_lo, N)])
        return Qp(H, f, G, w)

    # -- solve ------------------------------------------------------------------

    def solve(self, x0, U_warm=None) -> NmpcSolution:
        env, cfg = self.env, self.config
        m = env.n_inputs
        U = (np.zeros(cfg.N * m) if U_warm is None
             else np.clip(np.asarray(U_warm, dtype=float),
                          np.tile(self.u_lo, cfg.N), np.tile(self.u_hi, cfg.N)))
        cost = self.horizon_cost(x0, U)
        if not np.isfinite(cost):
            # a warm start that blows the prediction up is discarded
            U = np.zeros(cfg.N * m)
            cost = self.horizon_cost(x0, U)
        trace = [cost]
        stalled = False
        iterations = 0
        for _ in range(cfg.max_sqp_iter):
            iterations += 1
            try:
                xs = self._rollout(x0, U)
                mats = self._linearize_knots(xs, U)
            except (DomainError, IntegrationError):
                # nominal not linearizable; keep the best sequence found
                stalled = True
                break
            dU = qp_solve(self._correction_qp(xs, U, mats)).u

            alpha = 1.0
            improved = False
            for _ in range(cfg.ls_max_steps):
                trial = U + alpha * dU
                trial_cost = self.horizon_cost(x0, trial)
                if trial_cost < cost - 1e-14 * max(1.0, abs(cost)):
                    U, cost = trial, trial_cost
                    improved = True
                    break
                alpha *= cfg.ls_shrink
            trace.append(cost)
            if not improved:
                stalled = np.max(np.abs(dU), initial=0.0) > cfg.step_tol
                break
            if np.max(np.abs(alpha * dU), initial=0.0) < cfg.step_tol:
                break
        return NmpcSolution(env.denorm_input(U[:m]), U, iterations, cost,
                            stalled, trace)

    def control(self, x) -> np.ndarray:
        """Receding-horizon move with shift-and-hold warm starting."""
        sol = self.solve(x, self._warm)
        m = self.env.n_inputs
        self._warm = np.concatenate([sol.U[m:], sol.U[-m:]])
        self.iterations_per_step.append(sol.iterations)
        return sol.u0


def nmpc_solve(env: ProcessEnv, x0, U_warm=None,
               config: NmpcConfig | None = None) -> NmpcSolution:
    return NmpcController(env, config).solve(x0, U_warm)


def nmpc_rollout(env: ProcessEnv, x0, n_steps: int | None = None,
                 config: NmpcConfig | None = None):
    """Closed-loop NMPC trajectory, its metrics, and the controller used."""
    from .bench.metrics import compute_metrics
    from .rl import rollout

    controller = NmpcController(env, config)
    traj = rollout(env, controller.control, x0, n_steps)
    metrics = compute_metrics(traj.states, traj.costs, env.x_sp, env.dt,
                              env.tracked_states)
    return traj, metrics, controller
