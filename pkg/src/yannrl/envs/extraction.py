"""Five-stage countercurrent extraction column.

Ten states: solute concentration in the liquid phase of stages 1..5 followed
by the gas phase of stages 1..5.  Inputs are the liquid and gas flow rates.
Fresh liquid enters stage 1 and fresh gas enters stage 5; interstage transfer
follows a power-law equilibrium.  Default parameter values are the classic
textbook ones with rates read per minute so the short regulation episodes used
here see meaningful dynamics.
"""

from dataclasses import dataclass

import numpy as np

from scipy.optimize import root

from .base import DomainError, ProcessEnv, common_kwargs

_NEG_TOL = 1e-6


@dataclass(frozen=True)
class ExtractionParams:
    V_l: float       # stage liquid holdup, m^3
    V_g: float       # stage gas holdup, m^3
    K_la: float      # mass-transfer capacity, 1/min
    m: float         # equilibrium constant
    e: float         # equilibrium exponent
    C_X_feed: float  # liquid feed concentration entering stage 1
    C_Y_feed: float  # gas feed concentration entering stage 5

    def __post_init__(self):
        for field in ("V_l", "V_g", "m"):
            if getattr(self, field) <= 0:
                raise ValueError(f"{field} must be positive")
        if self.K_la < 0:  # zero switches interphase transfer off
            raise ValueError("K_la must be nonnegative")
        if self.C_X_feed < 0 or self.C_Y_feed < 0:
            raise ValueError("feed concentrations must be nonnegative")


def extraction_dynamics(x, u, p: ExtractionParams) -> np.ndarray:
    """Ten stage balances; transfer moves solute between phases, never creates it."""
    x = np.asarray(x, dtype=float)
    if np.min(x) < -_NEG_TOL:
        raise DomainError(f"negative concentration {np.min(x):.3e}")
    x = np.maximum(x, 0.0)
    X = x[:5]
    Y = x[5:]
    L, G = float(u[0]), float(u[1])
    X_eq = (Y / p.m) ** p.e
    F = p.K_la * (X - X_eq) * p.V_l
    X_in = np.concatenate([[p.C_X_feed], X[:-1]])
    Y_in = np.concatenate([Y[1:], [p.C_Y_feed]])
    dX = (L * (X_in - X) - F) / p.V_l
    dY = (G * (Y_in - Y) + F) / p.V_g
    return np.concatenate([dX, dY])


def boundary_flux(x, u, p: ExtractionParams) -> float:
    """Net solute flow into the column: feeds in minus exits out."""
    X = np.asarray(x[:5], dtype=float)
    Y = np.asarray(x[5:], dtype=float)
    L, G = float(u[0]), float(u[1])
    return L * (p.C_X_feed - X[4]) + G * (p.C_Y_feed - Y[0])


def solve_extraction_steady_state(p: ExtractionParams, L: float, G: float,
                                  guess=None) -> np.ndarray:
    """Column steady state under constant flows, found by root solving."""
    if guess is None:
        guess = np.concatenate([
            np.linspace(0.9 * p.C_X_feed, 0.1 * p.C_X_feed, 5),
            np.linspace(0.9 * p.C_X_feed, 0.1 * p.C_X_feed, 5),
        ])
    u = np.array([L, G])
    sol = root(lambda s: extraction_dynamics(s, u, p), guess, tol=1e-13)
    if not sol.success:
        raise RuntimeError(f"steady-state solve failed: {sol.message}")
    return sol.x


class ExtractionEnv(ProcessEnv):
    name = "extraction"

    def __init__(self, params: ExtractionParams, **kwargs):
        super().__init__(params, **kwargs)

    def dynamics(self, x, u) -> np.ndarray:
        return extraction_dynamics(x, u, self.params)

    def project_state(self, x) -> np.ndarray:
        return np.maximum(x, 0.0)

    @classmethod
    def from_config(cls, cfg: dict) -> "ExtractionEnv":
        return cls(ExtractionParams(**cfg["params"]), **common_kwargs(cfg))
