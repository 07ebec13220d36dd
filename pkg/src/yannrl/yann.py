"""Actor and critic that start exact and stay trainable.

Evaluation never mutates; training replaces the residual functionally, so a
single instance may be read from concurrent rollouts while one learner owns
the updates.

The actor wraps a frozen piecewise-affine control law and adds a
zero-initialized residual network, so at construction it reproduces the
explicit law everywhere while remaining as expressive as any network once the
residual trains.  The critic wraps the closed-form quadratic state-action
value of the linear surrogate,

    Q(x, u) = [x; u]' M [x; u],
    M = [[Q_w + g A'PA, g A'PB], [g B'PA, R + g B'PB]],

with the same residual trick.  Both operate in normalized deviation
coordinates; the actor clamps its output to the normalized input box with a
pass-through-inside, zero-outside subgradient.
"""

import json

from dataclasses import dataclass

import numpy as np

from .explicit_mpc import PWAControlLaw, evaluate_pwa_batch, evaluate_pwa_nearest, law_from_dict, law_to_dict
from .nets import Mlp
from .numerics import check_finite


@dataclass(frozen=True)
class ResidualSpec:
    """Architecture of a residual head."""
    hidden: tuple = (64, 64)
    activation: str = "tanh"
    seed: int = 0

    def build(self, n_in: int, n_out: int, zero_output: bool = True) -> Mlp:
        widths = [n_in, *self.hidden, n_out]
        acts = [self.activation] * len(self.hidden) + ["identity"]
        return Mlp(widths, acts, seed=self.seed, zero_output_init=zero_output)


class YannActor:
    """Frozen explicit law plus trainable residual, clamped to the input box."""

    def __init__(self, law: PWAControlLaw, residual: Mlp, u_lo, u_hi,
                 train_pwa: bool = False):
        if train_pwa:
            raise ValueError("the explicit part stays frozen during training")
        self.law = law
        self.residual = residual
        self.u_lo = np.asarray(u_lo, dtype=float)
        self.u_hi = np.asarray(u_hi, dtype=float)
        self.train_pwa = False
        if residual.n_out != self.u_lo.size:
            raise ValueError("residual output width must match the input dimension")

    # -- evaluation -----------------------------------------------------------

    def exact_part(self, x) -> np.ndarray:
        return evaluate_pwa_nearest(self.law, x)

    def pre_clamp(self, x) -> np.ndarray:
        return self.exact_part(x) + self.residual.forward(x)

    def forward(self, x) -> np.ndarray:
        return np.clip(self.pre_clamp(x), self.u_lo, self.u_hi)

    def forward_batch(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        base = evaluate_pwa_batch(self.law, X)
        res = np.array([self.residual.forward(x) for x in X])
        return np.clip(base + res, self.u_lo, self.u_hi)

    # -- training -------------------------------------------------------------

    def backward_policy(self, x, grad_u):
        """Residual-parameter gradients of <grad_u, forward(x)>.

        The clamp passes gradient through only where the pre-clamp output is
        strictly inside the box; the frozen law contributes no parameters.
        """
        pre = self.pre_clamp(x)
        mask = ((pre > self.u_lo) & (pre < self.u_hi)).astype(float)
        grads, _ = self.residual.backward(x, np.asarray(grad_u, dtype=float) * mask)
        return grads

    @property
    def trainable_mlp(self) -> Mlp:
        return self.residual

    def with_trainable(self, mlp: Mlp) -> "YannActor":
        return YannActor(self.law, mlp, self.u_lo, self.u_hi)

    def copy(self) -> "YannActor":
        return self.with_trainable(self.residual.copy())

    # -- serialization ----------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "format": "yann-actor-v1",
            "law": law_to_dict(self.law),
            "residual": self.residual.to_dict(),
            "u_lo": self.u_lo.tolist(),
            "u_hi": self.u_hi.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "YannActor":
        if d.get("format") != "yann-actor-v1":
            raise ValueError(f"unknown actor format {d.get('format')!r}")
        return cls(law_from_dict(d["law"]), Mlp.from_dict(d["residual"]),
                   d["u_lo"], d["u_hi"])

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)

    @classmethod
    def load(cls, path) -> "YannActor":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def build_yann_actor(law: PWAControlLaw, residual_spec: ResidualSpec,
                     u_lo, u_hi) -> YannActor:
    """Actor whose output equals the law everywhere at construction."""
    n = law.domain[0].shape[1]
    m = np.asarray(u_lo).size
    residual = residual_spec.build(n, m, zero_output=True)
    return YannActor(law, residual, u_lo, u_hi)


class YannCritic:
    """Fixed quadratic form plus trainable residual on [x; u]."""

    def __init__(self, M, residual: Mlp):
        M = check_finite(np.atleast_2d(M), "M")
        asym = np.max(np.abs(M - M.T))
        if asym > 1e-12:
            raise ValueError(f"M must be symmetric, asymmetry {asym:.2e}")
        self.M = 0.5 * (M + M.T)
        self.residual = residual
        if residual.n_in != M.shape[0] or residual.n_out != 1:
            raise ValueError("residual must map the stacked (x, u) to a scalar")

    def forward(self, x, u) -> float:
        z = np.concatenate([np.asarray(x, dtype=float), np.asarray(u, dtype=float)])
        return float(z @ self.M @ z + self.residual.forward(z)[0])

    def backward(self, x, u, cotangent: float):
        """(residual grads, dQ/dx, dQ/du) of cotangent * Q(x, u)."""
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        z = np.concatenate([x, u])
        grads, dz_res = self.residual.backward(z, np.array([float(cotangent)]))
        dz = float(cotangent) * 2.0 * (self.M @ z) + dz_res
        return grads, dz[:x.size], dz[x.size:]

    def grad_u(self, x, u) -> np.ndarray:
        return self.backward(x, u, 1.0)[2]

    @property
    def trainable_mlp(self) -> Mlp:
        return self.residual

    def with_trainable(self, mlp: Mlp) -> "YannCritic":
        return YannCritic(self.M, mlp)

    def copy(self) -> "YannCritic":
        return self.with_trainable(self.residual.copy())

    def to_dict(self) -> dict:
        return {
            "format": "yann-critic-v1",
            "M": self.M.tolist(),
            "residual": self.residual.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "YannCritic":
        if d.get("format") != "yann-critic-v1":
            raise ValueError(f"unknown critic format {d.get('format')!r}")
        return cls(np.array(d["M"], dtype=float), Mlp.from_dict(d["residual"]))

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)

    @classmethod
    def load(cls, path) -> "YannCritic":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def assemble_q_matrix(A, B, Q_w, R, P, gamma: float) -> np.ndarray:
    """Block quadratic form of the one-step cost plus discounted value."""
    A = np.atleast_2d(A)
    B = np.atleast_2d(B)
    upper_left = Q_w + gamma * A.T @ P @ A
    upper_right = gamma * A.T @ P @ B
    lower_right = R + gamma * B.T @ P @ B
    M = np.block([[upper_left, upper_right], [upper_right.T, lower_right]])
    return 0.5 * (M + M.T)


def build_yann_critic(A, B, Q_w, R, P, gamma: float,
                      residual_spec: ResidualSpec) -> YannCritic:
    """Critic equal to the linear surrogate's explicit Q at construction."""
    M = assemble_q_matrix(A, B, Q_w, R, P, gamma)
    n = np.atleast_2d(A).shape[0]
    m = np.atleast_2d(B).shape[1]
    residual = residual_spec.build(n + m, 1, zero_output=True)
    return YannCritic(M, residual)
