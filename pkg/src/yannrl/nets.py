"""Minimal multilayer-perceptron engine.

Plain numpy forward passes, exact reverse-mode gradients with respect to both
parameters and inputs, and an Adam optimizer.  No batching inside the net:
callers that train on batches accumulate per-sample gradients themselves.
Parameter updates are functional; every update returns a new Mlp so target
networks and checkpoints never alias training state.
"""

import json

import numpy as np

ACTIVATIONS = ("tanh", "relu", "identity")


def _act(kind, z):
    if kind == "tanh":
        return np.tanh(z)
    if kind == "relu":
        return np.maximum(z, 0.0)
    return z


def _act_grad(kind, z):
    if kind == "tanh":
        t = np.tanh(z)
        return 1.0 - t * t
    if kind == "relu":
        return (z > 0.0).astype(float)
    return np.ones_like(z)


class Mlp:
    """Fully connected net: widths[0] inputs through widths[-1] outputs.

    Hidden weights draw from U(-1/sqrt(fan_in), 1/sqrt(fan_in)) with the given
    seed; biases start at zero.  With zero_output_init the final layer's
    weights and biases are exactly zero, so the whole net outputs zero until
    trained, which is what residual heads rely on.
    """

    def __init__(self, widths, activations=None, seed: int = 0,
                 zero_output_init: bool = False, params=None):
        widths = [int(w) for w in widths]
        if len(widths) < 2:
            raise ValueError("need at least input and output widths")
        n_layers = len(widths) - 1
        if activations is None:
            activations = ["tanh"] * (n_layers - 1) + ["identity"]
        if len(activations) != n_layers:
            raise ValueError(f"{n_layers} layers need {n_layers} activations")
        for a in activations:
            if a not in ACTIVATIONS:
                raise ValueError(f"unknown activation {a!r}")
        self.widths = widths
        self.activations = list(activations)
        self.zero_output_init = bool(zero_output_init)
        self.seed = seed

        if params is not None:
            self.W = [np.array(Wl, dtype=float) for Wl in params[0]]
            self.b = [np.array(bl, dtype=float) for bl in params[1]]
        else:
            rng = np.random.default_rng(seed)
            self.W, self.b = [], []
            for layer in range(n_layers):
                fan_in = widths[layer]
                bound = 1.0 / np.sqrt(fan_in)
                W = rng.uniform(-bound, bound, size=(widths[layer + 1], fan_in))
                b = np.zeros(widths[layer + 1])
                self.W.append(W)
                self.b.append(b)
            if zero_output_init:
                self.W[-1] = np.zeros_like(self.W[-1])
                self.b[-1] = np.zeros_like(self.b[-1])
        for W, b in zip(self.W, self.b):
            if not (np.all(np.isfinite(W)) and np.all(np.isfinite(b))):
                raise ValueError("non-finite parameters")

    # -- parameter plumbing -------------------------------------------------

    @property
    def n_in(self) -> int:
        return self.widths[0]

    @property
    def n_out(self) -> int:
        return self.widths[-1]

    def params(self):
        """Flat parameter list [W0, b0, W1, b1, ...] (references, not copies)."""
        out = []
        for W, b in zip(self.W, self.b):
            out.append(W)
            out.append(b)
        return out

    def with_params(self, flat):
        """New Mlp with the same shape carrying the given parameter arrays."""
        W = [np.array(flat[2 * i], dtype=float) for i in range(len(self.W))]
        b = [np.array(flat[2 * i + 1], dtype=float) for i in range(len(self.b))]
        return Mlp(self.widths, self.activations, self.seed,
                   self.zero_output_init, params=(W, b))

    def copy(self):
        return self.with_params(self.params())

    # -- evaluation ---------------------------------------------------------

    def forward(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        a = x
        for W, b, kind in zip(self.W, self.b, self.activations):
            a = _act(kind, W @ a + b)
        return a

    def backward(self, x, cotangent):
        """Gradients of <cotangent, forward(x)>.

        Recomputes the forward pass internally.  Returns (grads, dx) where
        grads aligns with params() and dx is the gradient with respect to x.
        """
        x = np.asarray(x, dtype=float)
        cot = np.asarray(cotangent, dtype=float)
        acts = [x]
        zs = []
        a = x
        for W, b, kind in zip(self.W, self.b, self.activations):
            z = W @ a + b
            zs.append(z)
            a = _act(kind, z)
            acts.append(a)

        grads = [None] * (2 * len(self.W))
        delta = cot
        for layer in range(len(self.W) - 1, -1, -1):
            delta = delta * _act_grad(self.activations[layer], zs[layer])
            grads[2 * layer] = np.outer(delta, acts[layer])
            grads[2 * layer + 1] = delta.copy()
            delta = self.W[layer].T @ delta
        return grads, delta

    # -- serialization ------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "format": "mlp-v1",
            "widths": self.widths,
            "activations": self.activations,
            "zero_output_init": self.zero_output_init,
            "seed": self.seed,
            "weights": [W.tolist() for W in self.W],
            "biases": [b.tolist() for b in self.b],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Mlp":
        if d.get("format") != "mlp-v1":
            raise ValueError(f"unknown checkpoint format {d.get('format')!r}")
        return cls(d["widths"], d["activations"], d.get("seed", 0),
                   d.get("zero_output_init", False),
                   params=(d["weights"], d["biases"]))

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)

    @classmethod
    def load(cls, path) -> "Mlp":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


# ---------------------------------------------------------------------------
# gradient containers
# ---------------------------------------------------------------------------

def zero_grads(mlp: Mlp):
    return [np.zeros_like(p) for p in mlp.params()]


def add_grads(total, grads, scale: float = 1.0):
    for t, g in zip(total, grads):
        t += scale * g
    return total


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------

class AdamState:
    """Moment accumulators and step counter for one parameter list."""

    def __init__(self, mlp: Mlp, lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.m = [np.zeros_like(p) for p in mlp.params()]
        self.v = [np.zeros_like(p) for p in mlp.params()]
        self.step = 0
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps


def adam_step(mlp: Mlp, grads, state: AdamState):
    """One bias-corrected Adam update.  Returns (new_mlp, state)."""
    state.step += 1
    t = state.step
    new_params = []
    for i, (p, g) in enumerate(zip(mlp.params(), grads)):
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g
        m_hat = state.m[i] / (1.0 - state.beta1 ** t)
        v_hat = state.v[i] / (1.0 - state.beta2 ** t)
        new_params.append(p - state.lr * m_hat / (np.sqrt(v_hat) + state.eps))
    return mlp.with_params(new_params), state


def soft_update_mlp(target: Mlp, online: Mlp, tau: float) -> Mlp:
    """Polyak blend: theta_target <- tau * theta + (1 - tau) * theta_target."""
    if tau == 1.0:
        return online.copy()
    if tau == 0.0:
        return target
    blended = [tau * po + (1.0 - tau) * pt
               for pt, po in zip(target.params(), online.params())]
    return target.with_params(blended)
