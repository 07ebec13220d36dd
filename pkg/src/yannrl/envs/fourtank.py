"""Quadruple-tank system with two pump voltages as inputs.

States are the four liquid heights in meters.  The default parameters are the
standard laboratory values in SI units, so the ODE runs in seconds and the
environment config carries ode_time_scale = 60 to express its sample time in
minutes.  Heights are clamped at zero before the square roots and after each
substep, matching the physics of an emptying tank.
"""

from dataclasses import dataclass

import numpy as np

from .base import ProcessEnv, common_kwargs


@dataclass(frozen=True)
class FourTankParams:
    a1: float
    a2: float
    a3: float
    a4: float   # outlet areas, m^2
    A1: float
    A2: float
    A3: float
    A4: float   # tank areas, m^2
    g_a: float  # gravitational acceleration, m/s^2
    gamma1: float
    gamma2: float  # valve splits in (0, 1)
    k1: float
    k2: float   # pump gains, m^3/(s V)

    def __post_init__(self):
        for field in ("a1", "a2", "a3", "a4", "A1", "A2", "A3", "A4", "g_a", "k1", "k2"):
            if getattr(self, field) <= 0:
                raise ValueError(f"{field} must be positive")
        for field in ("gamma1", "gamma2"):
            if not 0.0 < getattr(self, field) < 1.0:
                raise ValueError(f"{field} must lie in (0, 1)")


def fourtank_dynamics(x, u, p: FourTankParams) -> np.ndarray:
    """Height derivatives; square roots see heights clamped at zero."""
    h = np.maximum(np.asarray(x, dtype=float), 0.0)
    v1, v2 = float(u[0]), float(u[1])
    s = np.sqrt(2.0 * p.g_a * h)
    return np.array([
        -p.a1 / p.A1 * s[0] + p.a3 / p.A1 * s[2] + p.gamma1 * p.k1 / p.A1 * v1,
        -p.a2 / p.A2 * s[1] + p.a4 / p.A2 * s[3] + p.gamma2 * p.k2 / p.A2 * v2,
        -p.a3 / p.A3 * s[2] + (1.0 - p.gamma2) * p.k2 / p.A3 * v2,
        -p.a4 / p.A4 * s[3] + (1.0 - p.gamma1) * p.k1 / p.A4 * v1,
    ])


def solve_fourtank_operating_point(p: FourTankParams, h3: float, h4: float):
    """Steady heights and pump voltages consistent with given (h3, h4).

    Tanks 3 and 4 fix the voltages exactly; tanks 1 and 2 then settle at the
    unique heights balancing their own outflows.
    """
    v2 = p.a3 * np.sqrt(2.0 * p.g_a * h3) / ((1.0 - p.gamma2) * p.k2)
    v1 = p.a4 * np.sqrt(2.0 * p.g_a * h4) / ((1.0 - p.gamma1) * p.k1)
    h1 = ((p.a3 * np.sqrt(2.0 * p.g_a * h3) + p.gamma1 * p.k1 * v1) / p.a1) ** 2 / (2.0 * p.g_a)
    h2 = ((p.a4 * np.sqrt(2.0 * p.g_a * h4) + p.gamma2 * p.k2 * v2) / p.a2) ** 2 / (2.0 * p.g_a)
    return np.array([h1, h2, h3, h4]), np.array([v1, v2])


class FourTankEnv(ProcessEnv):
    name = "fourtank"

    def __init__(self, params: FourTankParams, **kwargs):
        super().__init__(params, **kwargs)

    def dynamics(self, x, u) -> np.ndarray:
        return fourtank_dynamics(x, u, self.params)

    def project_state(self, x) -> np.ndarray:
        return np.maximum(x, 0.0)

    @classmethod
    def from_config(cls, cfg: dict) -> "FourTankEnv":
        return cls(FourTankParams(**cfg["params"]), **common_kwargs(cfg))
