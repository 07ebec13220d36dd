"""DDPG-style training on the process environments.

Everything minimizes cost: the critic regresses the cost-to-go target
y = c + gamma (1 - terminal) Q_target(x', pi_target(x')) and the actor
descends mean Q(x, pi(x)).  Two entry points share the machinery: vanilla
mode adds clipped Gaussian exploration noise to randomly initialized
networks, while the exact-initialized networks train without any injected
noise.  All randomness flows from one seed, so a fixed config reproduces its
episode log bit for bit.

Networks and the replay buffer live in normalized deviation coordinates; the
rollout helpers translate to and from physical units at the environment
boundary.
"""

import csv
import json
import time

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .bench.metrics import compute_metrics
from .envs.base import ProcessEnv
from .explicit_mpc import PWAControlLaw, evaluate_pwa_nearest
from .nets import AdamState, Mlp, adam_step, add_grads, soft_update_mlp, zero_grads


@dataclass(frozen=True)
class Transition:
    x: np.ndarray
    u: np.ndarray
    cost: float
    x_next: np.ndarray
    terminal: bool

    def __post_init__(self):
        if not (np.all(np.isfinite(self.x)) and np.all(np.isfinite(self.u))
                and np.all(np.isfinite(self.x_next)) and np.isfinite(self.cost)):
            raise ValueError("transition entries must be finite")
        if self.cost < 0.0:
            raise ValueError("cost must be nonnegative")


class ReplayBuffer:
    """Seeded uniform-sampling ring buffer."""

    def __init__(self, capacity: int, seed: int = 0):
        self.capacity = int(capacity)
        self._store: list[Transition] = []
        self._write = 0
        self._rng = np.random.default_rng(seed)

    def __len__(self) -> int:
        return len(self._store)

    def push(self, tr: Transition) -> None:
        if len(self._store) < self.capacity:
            self._store.append(tr)
        else:
            self._store[self._write] = tr
        self._write = (self._write + 1) % self.capacity

    def sample(self, batch_size: int) -> list[Transition]:
        idx = self._rng.integers(0, len(self._store), size=batch_size)
        return [self._store[i] for i in idx]


@dataclass(frozen=True)
class TrainConfig:
    gamma: float = 0.99
    tau: float = 0.005
    actor_lr: float = 1e-4
    critic_lr: float = 1e-3
    batch_size: int = 64
    buffer_capacity: int = 100_000
    episodes: int = 25
    exploration_sigma: float = 0.1  # fraction of the normalized input range
    updates_per_step: int = 1
    seed: int = 0
    record_timing: bool = False
    keep_trajectories: bool = False
    checkpoint_every: int = 0       # episodes between checkpoints; 0 disables
    checkpoint_dir: str | None = None

    def __post_init__(self):
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must lie in (0, 1]")
        if not 0.0 < self.tau <= 1.0:
            raise ValueError("tau must lie in (0, 1]")
        if self.actor_lr < 0 or self.critic_lr < 0:
            raise ValueError("learning rates must be nonnegative")


# ---------------------------------------------------------------------------
# vanilla networks (randomly initialized counterparts of the exact pair)
# ---------------------------------------------------------------------------

class MlpActor:
    """Plain network policy clamped to the normalized input box."""

    def __init__(self, mlp: Mlp, u_lo, u_hi):
        self.mlp = mlp
        self.u_lo = np.asarray(u_lo, dtype=float)
        self.u_hi = np.asarray(u_hi, dtype=float)

    def to_dict(self) -> dict:
        return {"format": "mlp-actor-v1", "mlp": self.mlp.to_dict(),
                "u_lo": self.u_lo.tolist(), "u_hi": self.u_hi.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "MlpActor":
        if d.get("format") != "mlp-actor-v1":
            raise ValueError(f"unknown actor format {d.get('format')!r}")
        return cls(Mlp.from_dict(d["mlp"]), d["u_lo"], d["u_hi"])

    def pre_clamp(self, x) -> np.ndarray:
        return self.mlp.forward(x)

    def forward(self, x) -> np.ndarray:
        return np.clip(self.pre_clamp(x), self.u_lo, self.u_hi)

    def backward_policy(self, x, grad_u):
        pre = self.pre_clamp(x)
        mask = ((pre > self.u_lo) & (pre < self.u_hi)).astype(float)
        grads, _ = self.mlp.backward(x, np.asarray(grad_u, dtype=float) * mask)
        return grads

    @property
    def trainable_mlp(self) -> Mlp:
        return self.mlp

    def with_trainable(self, mlp: Mlp) -> "MlpActor":
        return MlpActor(mlp, self.u_lo, self.u_hi)

    def copy(self) -> "MlpActor":
        return self.with_trainable(self.mlp.copy())


class MlpCritic:
    """Plain network Q on the stacked (x, u)."""

    def __init__(self, mlp: Mlp):
        self.mlp = mlp

    def to_dict(self) -> dict:
        return {"format": "mlp-critic-v1", "mlp": self.mlp.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "MlpCritic":
        if d.get("format") != "mlp-critic-v1":
            raise ValueError(f"unknown critic format {d.get('format')!r}")
        return cls(Mlp.from_dict(d["mlp"]))

    def forward(self, x, u) -> float:
        z = np.concatenate([np.asarray(x, dtype=float), np.asarray(u, dtype=float)])
        return float(self.mlp.forward(z)[0])

    def backward(self, x, u, cotangent: float):
        x = np.asarray(x, dtype=float)
        z = np.concatenate([x, np.asarray(u, dtype=float)])
        grads, dz = self.mlp.backward(z, np.array([float(cotangent)]))
        return grads, dz[:x.size], dz[x.size:]

    def grad_u(self, x, u) -> np.ndarray:
        return self.backward(x, u, 1.0)[2]

    @property
    def trainable_mlp(self) -> Mlp:
        return self.mlp

    def with_trainable(self, mlp: Mlp) -> "MlpCritic":
        return MlpCritic(mlp)

    def copy(self) -> "MlpCritic":
        return self.with_trainable(self.mlp.copy())


def build_vanilla_networks(env: ProcessEnv, hidden=(64, 64), seed: int = 0):
    """Randomly initialized actor and critic matching the environment shapes."""
    n, m = env.n_states, env.n_inputs
    acts = ["tanh"] * len(hidden) + ["identity"]
    actor_mlp = Mlp([n, *hidden, m], acts, seed=seed)
    critic_mlp = Mlp([n + m, *hidden, 1], acts, seed=seed + 1)
    return MlpActor(actor_mlp, *env.norm_input_bounds()), MlpCritic(critic_mlp)


# ---------------------------------------------------------------------------
# update steps
# ---------------------------------------------------------------------------

def critic_update(critic, opt: AdamState, target_actor, target_critic,
                  batch, gamma: float):
    """One Adam step on the mean squared Bellman error.  Returns (critic, loss)."""
    k = len(batch)
    grads = zero_grads(critic.trainable_mlp)
    loss = 0.0
    for tr in batch:
        if tr.terminal:
            y = tr.cost
        else:
            u_next = target_actor.forward(tr.x_next)
            y = tr.cost + gamma * target_critic.forward(tr.x_next, u_next)
        q = critic.forward(tr.x, tr.u)
        loss += (q - y) ** 2 / k
        g, _, _ = critic.backward(tr.x, tr.u, 2.0 * (q - y) / k)
        add_grads(grads, g)
    mlp, _ = adam_step(critic.trainable_mlp, grads, opt)
    return critic.with_trainable(mlp), float(loss)


def actor_update(actor, opt: AdamState, critic, batch):
    """One Adam step on mean Q(x, pi(x)) with the critic frozen.

    Returns (actor, loss); loss is the pre-step mean Q.
    """
    k = len(batch)
    grads = zero_grads(actor.trainable_mlp)
    loss = 0.0
    for tr in batch:
        u = actor.forward(tr.x)
        loss += critic.forward(tr.x, u) / k
        g_u = critic.grad_u(tr.x, u)
        add_grads(grads, actor.backward_policy(tr.x, g_u / k))
    mlp, _ = adam_step(actor.trainable_mlp, grads, opt)
    return actor.with_trainable(mlp), float(loss)


def soft_update(target, online, tau: float):
    """Polyak-blend the trainable parameters of a target network wrapper."""
    return target.with_trainable(soft_update_mlp(target.trainable_mlp,
                                                 online.trainable_mlp, tau))


# ---------------------------------------------------------------------------
# rollouts
# ---------------------------------------------------------------------------

class Trajectory:
    """Closed-loop record: K inputs, K costs, K+1 states, times in minutes."""

    def __init__(self, times, states, inputs, costs, infeasible: bool):
        self.times = np.asarray(times, dtype=float)
        self.states = np.atleast_2d(np.asarray(states, dtype=float))
        self.inputs = np.atleast_2d(np.asarray(inputs, dtype=float))
        self.costs = np.asarray(costs, dtype=float)
        self.infeasible = bool(infeasible)
        if not np.all(np.isfinite(self.states)):
            raise ValueError("trajectory contains non-finite states")

    @property
    def n_steps(self) -> int:
        return self.costs.size

    def to_csv(self, path) -> None:
        n, m = self.states.shape[1], self.inputs.shape[1]
        header = (["t"] + [f"x{i + 1}" for i in range(n)]
                  + [f"u{j + 1}" for j in range(m)] + ["cost"])
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for t in range(self.n_steps):
                row = ([repr(float(self.times[t]))]
                       + [repr(float(v)) for v in self.states[t]]
                       + [repr(float(v)) for v in self.inputs[t]]
                       + [repr(float(self.costs[t]))])
                writer.writerow(row)

    @classmethod
    def from_csv(cls, path) -> "Trajectory":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            n = sum(1 for h in header if h.startswith("x"))
            rows = [[float(v) for v in row] for row in reader]
        arr = np.array(rows)
        times = arr[:, 0]
        states = arr[:, 1:1 + n]
        inputs = arr[:, 1 + n:-1]
        costs = arr[:, -1]
        return cls(times, states, inputs, costs, infeasible=False)


def actor_controller(env: ProcessEnv, actor):
    """Physical-units controller wrapping a normalized-space policy."""
    def control(x):
        return env.denorm_input(actor.forward(env.norm_state(x)))
    return control


def law_controller(env: ProcessEnv, law: PWAControlLaw):
    """Explicit-law controller saturated exactly like the wrapped policies."""
    u_lo, u_hi = env.norm_input_bounds()

    def control(x):
        un = evaluate_pwa_nearest(law, env.norm_state(x))
        return env.denorm_input(np.clip(un, u_lo, u_hi))
    return control


def rollout(env: ProcessEnv, control, x0, n_steps: int | None = None) -> Trajectory:
    """Deterministic noiseless closed loop from x0 under the given controller."""
    n_steps = env.episode_steps if n_steps is None else int(n_steps)
    x = np.asarray(x0, dtype=float)
    states = [x]
    inputs, costs, times = [], [], []
    infeasible = False
    for t in range(n_steps):
        u = np.asarray(control(x), dtype=float)
        res = env.step(x, u)
        times.append(t * env.dt)
        inputs.append(u)
        costs.append(env.stage_cost(x, u))
        states.append(res.state)
        x = res.state
        if res.infeasible:
            infeasible = True
            break
    return Trajectory(times, states, inputs, costs, infeasible)


def evaluate_policy(env: ProcessEnv, actor_or_control, x0_or_seed,
                    n_steps: int | None = None):
    """Rollout plus metrics.  Accepts an actor wrapper or a raw controller."""
    control = (actor_or_control if callable(actor_or_control)
               else actor_controller(env, actor_or_control))
    x0 = (np.asarray(x0_or_seed, dtype=float) if np.ndim(x0_or_seed) > 0
          else env.reset(int(x0_or_seed)))
    traj = rollout(env, control, x0, n_steps)
    m = compute_metrics(traj.states, traj.costs, env.x_sp, env.dt,
                        env.tracked_states)
    return traj, m


# ---------------------------------------------------------------------------
# training loop
# ---------------------------------------------------------------------------

@dataclass
class EpisodeRecord:
    episode: int
    cum_cost: float
    ise: float
    itae: float
    ess: float
    infeasible: bool
    wall_ms: int


@dataclass
class TrainResult:
    actor: object
    critic: object
    target_actor: object
    target_critic: object
    episodes: list = field(default_factory=list)
    trajectories: list = field(default_factory=list)

    @property
    def infeasible_count(self) -> int:
        return sum(1 for e in self.episodes if e.infeasible)


def train_ddpg(env: ProcessEnv, actor, critic, config: TrainConfig,
               mode: str = "yann") -> TrainResult:
    """Episode-based DDPG training.

    yann mode injects no action noise; vanilla mode perturbs actions with
    clipped Gaussian noise of config.exploration_sigma times the normalized
    input range.  Target networks start as copies and track by Polyak
    averaging after every update pair.  An infeasible-operating-point event
    terminates the episode (flagged in its record) and training moves on.
    """
    if mode not in ("yann", "vanilla"):
        raise ValueError(f"unknown mode {mode!r}")
    target_actor = actor.copy()
    target_critic = critic.copy()
    buffer = ReplayBuffer(config.buffer_capacity, seed=config.seed)
    noise_rng = np.random.default_rng(np.random.SeedSequence(
        entropy=config.seed, spawn_key=(1,)))
    actor_opt = AdamState(actor.trainable_mlp, lr=config.actor_lr)
    critic_opt = AdamState(critic.trainable_mlp, lr=config.critic_lr)
    u_lo, u_hi = env.norm_input_bounds()
    records = []
    trajectories = []

    for episode in range(config.episodes):
        t_start = time.perf_counter() if config.record_timing else 0.0
        x = env.reset(np.random.SeedSequence(entropy=config.seed,
                                             spawn_key=(2, episode)))
        states = [x]
        inputs, costs, times = [], [], []
        infeasible = False
        for t in range(env.episode_steps):
            xn = env.norm_state(x)
            un = actor.forward(xn)
            if mode == "vanilla":
                noise = config.exploration_sigma * noise_rng.normal(size=un.size)
                un = np.clip(un + noise, u_lo, u_hi)
            u = env.denorm_input(un)
            res = env.step(x, u)
            cost = env.stage_cost(x, u)
            buffer.push(Transition(xn, un, cost, env.norm_state(res.state),
                                   res.infeasible))
            times.append(t * env.dt)
            inputs.append(u)
            costs.append(cost)
            states.append(res.state)
            x = res.state

            if len(buffer) >= config.batch_size:
                for _ in range(config.updates_per_step):
                    batch = buffer.sample(config.batch_size)
                    critic, _ = critic_update(critic, critic_opt, target_actor,
                                              target_critic, batch, config.gamma)
                    actor, _ = actor_update(actor, actor_opt, critic, batch)
                    target_actor = soft_update(target_actor, actor, config.tau)
                    target_critic = soft_update(target_critic, critic, config.tau)

            if res.infeasible:
                infeasible = True
                break

        traj = Trajectory(times, states, inputs, costs, infeasible)
        m = compute_metrics(traj.states, traj.costs, env.x_sp, env.dt,
                            env.tracked_states)
        wall_ms = (int(round((time.perf_counter() - t_start) * 1e3))
                   if config.record_timing else 0)
        records.append(EpisodeRecord(episode, m.cum_cost, m.ise, m.itae, m.ess,
                                     infeasible, wall_ms))
        if config.keep_trajectories:
            trajectories.append(traj)
        if (config.checkpoint_every and config.checkpoint_dir
                and (episode + 1) % config.checkpoint_every == 0):
            write_checkpoint(actor, critic, config.checkpoint_dir, episode)

    return TrainResult(actor, critic, target_actor, target_critic, records,
                       trajectories)


def write_checkpoint(actor, critic, directory, episode: int) -> None:
    """Self-contained actor and critic files for one training episode."""
    path = Path(directory)
    path.mkdir(parents=True, exist_ok=True)
    with open(path / f"actor_ep{episode + 1}.json", "w") as fh:
        json.dump(actor.to_dict(), fh, indent=1)
    with open(path / f"critic_ep{episode + 1}.json", "w") as fh:
        json.dump(critic.to_dict(), fh, indent=1)


def write_episode_log(records, path) -> None:
    """Episode log CSV: episode,cum_cost,ise,itae,ess,infeasible,wall_ms."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["episode", "cum_cost", "ise", "itae", "ess",
                         "infeasible", "wall_ms"])
        for r in records:
            writer.writerow([r.episode, repr(float(r.cum_cost)), repr(float(r.ise)),
                             repr(float(r.itae)), repr(float(r.ess)),
                             int(r.infeasible), r.wall_ms])
