"""Glue from an environment to its explicit controller.

Linearizes the ODE at the operating point, discretizes over one control
interval, normalizes into deviation coordinates, solves the discounted
Riccati equation for the terminal weight, and condenses and solves the
multiparametric QP.  Everything downstream (actor, critic, benchmark
controllers) consumes the objects built here.
"""


from .envs.base import ProcessEnv
from .explicit_mpc import LinearSystem, MpcFormulation, condense, solve_mpqp
from .numerics import solve_dare
from .tolerances import DEFAULT, Tolerances


def env_linear_system(env: ProcessEnv) -> LinearSystem:
    """Normalized-deviation discrete model of the environment."""
    A, B = env.linearized_discrete()
    return LinearSystem(A, B, x_ss=env.x_sp, u_ss=env.u_ss, dt=env.dt)


def design_formulation(env: ProcessEnv, N: int | None = None,
                       gamma: float | None = None,
                       domain_scale: float = 1.0) -> MpcFormulation:
    """MPC formulation for an environment in normalized deviation coordinates.

    N and gamma default to the environment config's mpc section.  The law's
    domain is the normalized state box, optionally inflated by domain_scale.
    """
    mpc_cfg = env.extra.get("mpc", {})
    N = int(mpc_cfg.get("horizon", 3)) if N is None else int(N)
    gamma = float(mpc_cfg.get("gamma", 0.99)) if gamma is None else float(gamma)
    system = env_linear_system(env)
    P = solve_dare(system.A, system.B, env.Q_w, env.R, gamma)
    u_lo, u_hi = env.norm_input_bounds()
    dom_lo = env.norm_state(env.state_box.low) * domain_scale
    dom_hi = env.norm_state(env.state_box.high) * domain_scale
    return MpcFormulation(system, N, env.Q_w, env.R, P, gamma,
                          u_lo, u_hi, dom_lo, dom_hi)


def design_law(env: ProcessEnv, N: int | None = None, gamma: float | None = None,
               tol: Tolerances = DEFAULT):
    """Formulation, condensed QP, and explicit law for an environment."""
    form = design_formulation(env, N, gamma)
    cqp = condense(form)
    law = solve_mpqp(cqp, form.domain_polyhedron(), tol)
    law.metadata["formulation_hash"] = form.digest()
    law.metadata["gamma"] = form.gamma
    return form, cqp, law
