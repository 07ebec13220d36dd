"""Exothermic CSTR with cooling-jacket temperature as the manipulated variable.

Two states: concentration of species A (mol/L) and reactor temperature (K).
Default parameters follow the Seborg benchmark reactor with time in minutes.
"""

from dataclasses import dataclass

import numpy as np

from .base import DomainError, ProcessEnv, common_kwargs


@dataclass(frozen=True)
class CstrParams:
    q: float          # feed flow, L/min
    V: float          # reactor volume, L
    C_Af: float       # feed concentration, mol/L
    T_f: float        # feed temperature, K
    rho: float        # density, g/L
    C_p: float        # heat capacity, J/(g K)
    dH_r: float       # heat of reaction, J/mol (negative: exothermic)
    EA_over_R: float  # activation temperature, K
    k0: float         # pre-exponential rate, 1/min
    UA: float         # heat transfer coefficient, J/(min K)

    def __post_init__(self):
        positive = ("q", "V", "C_Af", "T_f", "rho", "C_p", "EA_over_R", "UA")
        for field in positive:
            if getattr(self, field) <= 0:
                raise ValueError(f"{field} must be positive")
        if self.k0 < 0:  # zero switches the reaction off
            raise ValueError("k0 must be nonnegative")
        if self.dH_r >= 0:
            raise ValueError("dH_r must be negative for an exothermic reaction")


def cstr_dynamics(x, u, p: CstrParams) -> np.ndarray:
    """Right-hand side of the reactor balances at state [C_A, T], input [T_c]."""
    C_A, T = float(x[0]), float(x[1])
    if T <= 0.0:
        raise DomainError(f"non-physical reactor temperature {T}")
    T_c = float(u[0])
    k = p.k0 * np.exp(-p.EA_over_R / T)
    dC_A = p.q / p.V * (p.C_Af - C_A) - k * C_A
    dT = (p.q / p.V * (p.T_f - T)
          + (-p.dH_r) / (p.rho * p.C_p) * k * C_A
          + p.UA / (p.rho * p.C_p * p.V) * (T_c - T))
    return np.array([dC_A, dT])


def cstr_jacobian_analytic(x, u, p: CstrParams):
    """Hand-differentiated Jacobians of cstr_dynamics, used as a test oracle."""
    C_A, T = float(x[0]), float(x[1])
    k = p.k0 * np.exp(-p.EA_over_R / T)
    dk_dT = k * p.EA_over_R / T ** 2
    heat = (-p.dH_r) / (p.rho * p.C_p)
    A = np.array([
        [-p.q / p.V - k, -dk_dT * C_A],
        [heat * k, -p.q / p.V + heat * dk_dT * C_A - p.UA / (p.rho * p.C_p * p.V)],
    ])
    B = np.array([[0.0], [p.UA / (p.rho * p.C_p * p.V)]])
    return A, B


def solve_cstr_operating_point(p: CstrParams, C_A_sp: float):
    """Steady (T, T_c) holding the reactor at concentration C_A_sp.

    The concentration balance fixes T in closed form, then the energy balance
    fixes the coolant temperature.
    """
    if not 0.0 < C_A_sp < p.C_Af:
        raise ValueError("setpoint concentration must sit strictly inside (0, C_Af)")
    T = p.EA_over_R / np.log(p.V * p.k0 * C_A_sp / (p.q * (p.C_Af - C_A_sp)))
    k = p.k0 * np.exp(-p.EA_over_R / T)
    heat = (-p.dH_r) / (p.rho * p.C_p)
    T_c = T - (p.q / p.V * (p.T_f - T) + heat * k * C_A_sp) * (p.rho * p.C_p * p.V) / p.UA
    return float(T), float(T_c)


class CstrEnv(ProcessEnv):
    name = "cstr"

    def __init__(self, params: CstrParams, **kwargs):
        super().__init__(params, **kwargs)

    def dynamics(self, x, u) -> np.ndarray:
        return cstr_dynamics(x, u, self.params)

    @classmethod
    def from_config(cls, cfg: dict) -> "CstrEnv":
        return cls(CstrParams(**cfg["params"]), **common_kwargs(cfg))
