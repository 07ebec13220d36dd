"""Tracking metrics over closed-loop trajectories.

Definitions used throughout the package (time in minutes, errors in physical
units of the tracked states):

    ISE   = sum_t ||e_t||_2^2 * dt
    ITAE  = sum_t t * ||e_t||_1 * dt
    e_SS  = mean of ||e_t||_1 over the final 10 percent of steps
    cumulative cost = sum_t C(x_t, u_t)

where e_t is the tracked-state error at sample t and the sums run over the
samples that carry an input (the terminal state is excluded).  Summation is
plain left-to-right so stored golden values reproduce bit-identically.
"""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Metrics:
    ise: float
    itae: float
    ess: float
    cum_cost: float

    def __post_init__(self):
        for name in ("ise", "itae", "ess", "cum_cost"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0.0:
                raise ValueError(f"{name} must be finite and nonnegative, got {v}")

    def as_dict(self) -> dict:
        return {"ise": self.ise, "itae": self.itae, "ess": self.ess,
                "cum_cost": self.cum_cost}


def compute_metrics(states, costs, x_sp, dt: float, tracked=None) -> Metrics:
    """Metrics of a trajectory sampled at t = 0, dt, ..., (K-1) dt.

    states holds at least K rows (extra terminal rows are ignored); costs has
    length K.  tracked selects the error coordinates, defaulting to all.
    """
    states = np.atleast_2d(np.asarray(states, dtype=float))
    costs = np.asarray(costs, dtype=float)
    K = costs.size
    if K == 0:
        raise ValueError("trajectory must contain at least one step")
    x_sp = np.asarray(x_sp, dtype=float)
    idx = list(range(x_sp.size)) if tracked is None else list(tracked)
    err = states[:K, idx] - x_sp[idx]

    ise = 0.0
    itae = 0.0
    for t in range(K):
        l1 = float(np.sum(np.abs(err[t])))
        ise += float(err[t] @ err[t]) * dt
        itae += (t * dt) * l1 * dt
    n_tail = max(1, int(np.ceil(0.1 * K)))
    tail = err[K - n_tail:]
    ess = float(np.mean(np.sum(np.abs(tail), axis=1)))
    cum = 0.0
    for c in costs:
        cum += float(c)
    return Metrics(ise=ise, itae=itae, ess=ess, cum_cost=cum)


def metrics_for_env(traj, env) -> Metrics:
    """Metrics of a Trajectory using the environment's setpoint and tracking."""
    return compute_metrics(traj.states, traj.costs, env.x_sp, env.dt,
                           env.tracked_states)
