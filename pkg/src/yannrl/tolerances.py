"""Single source of truth for numerical tolerances.

Every solver and geometric test in the package reads its thresholds from a
Tolerances record so tests and callers agree on one set of numbers.  The
module-level DEFAULT instance is what the library uses unless a caller passes
an override.
"""

from dataclasses import dataclass, replace


@dataclass(frozen=True)
class Tolerances:
    # Riccati iteration
    dare_step: float = 1e-12          # max-abs change between iterates
    dare_residual: float = 1e-10      # recursion residual of the returned P
    dare_max_iter: int = 20000

    # matrix exponential (scaling-and-squaring Taylor)
    zoh_residual: float = 1e-10
    expm_taylor_order: int = 12
    expm_scale_target: float = 0.5    # scale until ||M||_1 / 2^s below this

    # quadratic programming
    qp_kkt: float = 1e-8              # stationarity / feasibility residual
    qp_multiplier: float = 1e-9       # active multipliers may dip to -qp_multiplier
    qp_active: float = 1e-9           # constraint considered active within this
    qp_max_iter_scale: int = 50       # iteration cap = scale*(n_c+n_u)+100
    hessian_min_eig: float = 1e-10

    # polyhedra and the explicit law
    region_min_radius: float = 1e-7   # Chebyshev radius for a region to count
    region_membership: float = 1e-9   # point-in-region slack
    redundancy: float = 1e-9          # constraint-removal slack
    lp_bound: float = 1e9             # box applied to otherwise free LP vars

    # derivatives
    fd_rel_step: float = 1e-6         # central-difference step scale
    gradient_check_rel: float = 1e-5

    # equivalence checks
    oracle_match: float = 1e-6        # PWA law vs online QP
    exact_init: float = 1e-12         # critic quadratic-form match

    def with_overrides(self, **kwargs) -> "Tolerances":
        return replace(self, **kwargs)


DEFAULT = Tolerances()
