"""Linear test environment: x' = A_c x + B_c u around a zero operating point.

Exists so controllers can be validated against closed-form linear results;
with A_c = B_c = 0 it doubles as a zero-dynamics environment.
"""

from dataclasses import dataclass

import numpy as np

from .base import ProcessEnv, common_kwargs


@dataclass(frozen=True)
class LinearParams:
    A_c: np.ndarray
    B_c: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "A_c", np.atleast_2d(np.asarray(self.A_c, dtype=float)))
        object.__setattr__(self, "B_c", np.atleast_2d(np.asarray(self.B_c, dtype=float)))
        n = self.A_c.shape[0]
        if self.A_c.shape != (n, n) or self.B_c.shape[0] != n:
            raise ValueError("A_c must be square and share rows with B_c")


class LinearEnv(ProcessEnv):
    name = "linear"

    def __init__(self, params: LinearParams, **kwargs):
        super().__init__(params, **kwargs)

    def dynamics(self, x, u) -> np.ndarray:
        return self.params.A_c @ np.asarray(x, dtype=float) + self.params.B_c @ np.asarray(u, dtype=float)

    @classmethod
    def from_config(cls, cfg: dict) -> "LinearEnv":
        p = LinearParams(np.array(cfg["params"]["A_c"]), np.array(cfg["params"]["B_c"]))
        return cls(p, **common_kwargs(cfg))
