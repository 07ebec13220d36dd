"""Dense linear-algebra and optimization kernel.

Fixed-step RK4 integration, central-difference Jacobians, exact zero-order-hold
discretization, a discounted discrete algebraic Riccati solver, a primal
active-set solver for strictly convex QPs, and Chebyshev-center feasibility
tests for polyhedra.  Everything here is a pure function of its inputs and
sized for desk-scale problems (a few dozen variables at most).
"""

import numpy as np
from scipy.optimize import linprog

from .tolerances import DEFAULT, Tolerances


class NumericsError(Exception):
    """Base class for kernel failures."""


class IntegrationError(NumericsError):
    """A derivative evaluation produced a non-finite component."""


class RiccatiError(NumericsError):
    """The Riccati iteration failed to converge."""


class QpInfeasibleError(NumericsError):
    """The QP constraint set is empty."""


class QpCyclingError(NumericsError):
    """The active-set iteration exceeded its cycling guard."""


def check_finite(arr, name: str) -> np.ndarray:
    """Return arr as a float ndarray, raising if any entry is NaN or Inf."""
    a = np.asarray(arr, dtype=float)
    if not np.all(np.isfinite(a)):
        bad = np.argwhere(~np.isfinite(a))
        raise NumericsError(f"{name} contains non-finite entries at {bad[:5].tolist()}")
    return a


# ---------------------------------------------------------------------------
# integration and differentiation
# ---------------------------------------------------------------------------

def rk4_step(f, x, u, dt: float) -> np.ndarray:
    """One classic fourth-order Runge-Kutta step of x' = f(x, u).

    f is evaluated four times with the input u held constant over the step.
    Raises IntegrationError, naming the first offending component, if any
    stage derivative is non-finite.
    """
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    x = np.asarray(x, dtype=float)

    def eval_f(xs):
        dx = np.asarray(f(xs, u), dtype=float)
        if not np.all(np.isfinite(dx)):
            i = int(np.argwhere(~np.isfinite(dx))[0][0])
            raise IntegrationError(f"non-finite derivative in component {i}")
        return dx

    k1 = eval_f(x)
    k2 = eval_f(x + 0.5 * dt * k1)
    k3 = eval_f(x + 0.5 * dt * k2)
    k4 = eval_f(x + dt * k3)
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def jacobian_fd(f, x, u, rel_step: float | None = None):
    """Central-difference Jacobians (A_c, B_c) of f with respect to x and u.

    The per-coordinate step is rel_step * max(1, |coordinate|), which balances
    truncation against rounding for states far from unit scale.
    """
    tol = DEFAULT
    h0 = tol.fd_rel_step if rel_step is None else rel_step
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    n, m = x.size, u.size
    f0 = check_finite(f(x, u), "f(x, u)")

    A = np.zeros((f0.size, n))
    for i in range(n):
        h = h0 * max(1.0, abs(x[i]))
        xp = x.copy(); xp[i] += h
        xm = x.copy(); xm[i] -= h
        fp = check_finite(f(xp, u), "f(x+h, u)")
        fm = check_finite(f(xm, u), "f(x-h, u)")
        A[:, i] = (fp - fm) / (2.0 * h)

    B = np.zeros((f0.size, m))
    for j in range(m):
        h = h0 * max(1.0, abs(u[j]))
        up = u.copy(); up[j] += h
        um = u.copy(); um[j] -= h
        fp = check_finite(f(x, up), "f(x, u+h)")
        fm = check_finite(f(x, um), "f(x, u-h)")
        B[:, j] = (fp - fm) / (2.0 * h)

    return A, B


def expm(M: np.ndarray, tol: Tolerances = DEFAULT) -> np.ndarray:
    """Matrix exponential by scaling-and-squaring of a truncated Taylor series.

    Adequate for the small (n <= ~24) matrices this package builds; the scale
    s is chosen so ||M||_1 / 2^s falls below tol.expm_scale_target before the
    order-12 series is summed.
    """
    M = check_finite(M, "expm argument")
    norm = np.linalg.norm(M, 1)
    s = 0
    while norm / (2.0 ** s) >= tol.expm_scale_target:
        s += 1
    Ms = M / (2.0 ** s)
    E = np.eye(M.shape[0])
    term = np.eye(M.shape[0])
    for k in range(1, tol.expm_taylor_order + 1):
        term = term @ Ms / k
        E = E + term
    for _ in range(s):
        E = E @ E
    return E


def discretize_zoh(A_c, B_c, dt: float, tol: Tolerances = DEFAULT):
    """Exact zero-order-hold discretization of x' = A_c x + B_c u.

    Uses the block-matrix identity  exp([[A_c, B_c], [0, 0]] * dt) =
    [[A, B], [0, I]]  and returns (A, B).
    """
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    A_c = check_finite(np.atleast_2d(A_c), "A_c")
    B_c = check_finite(np.atleast_2d(B_c), "B_c")
    n, m = A_c.shape[0], B_c.shape[1]
    block = np.zeros((n + m, n + m))
    block[:n, :n] = A_c
    block[:n, n:] = B_c
    E = expm(block * dt, tol)
    return E[:n, :n].copy(), E[:n, n:].copy()


# ---------------------------------------------------------------------------
# Riccati
# ---------------------------------------------------------------------------

def solve_dare(A, B, Q_w, R, gamma: float = 1.0, tol: Tolerances = DEFAULT) -> np.ndarray:
    """Fixed point of the discounted Riccati recursion.

    P = Q_w + g A'PA - g^2 A'PB (R + g B'PB)^-1 B'PA,  g = gamma.
    Computed as the standard DARE on (sqrt(g) A, sqrt(g) B) by iterating from
    P0 = Q_w until the max-abs change between iterates falls below
    tol.dare_step.  gamma = 0 is allowed and collapses to P = Q_w.
    """
    A = check_finite(np.atleast_2d(A), "A")
    B = check_finite(np.atleast_2d(B), "B")
    Q_w = check_finite(np.atleast_2d(Q_w), "Q_w")
    R = check_finite(np.atleast_2d(R), "R")
    if not 0.0 <= gamma <= 1.0:
        raise ValueError(f"gamma must be in [0, 1], got {gamma}")

    sg = np.sqrt(gamma)
    As, Bs = sg * A, sg * B
    P = 0.5 * (Q_w + Q_w.T)
    delta = np.inf
    for _ in range(tol.dare_max_iter):
        BPB = Bs.T @ P @ Bs
        BPA = Bs.T @ P @ As
        gain = np.linalg.solve(R + BPB, BPA)
        P_next = Q_w + As.T @ P @ As - BPA.T @ gain
        P_next = 0.5 * (P_next + P_next.T)
        delta = np.max(np.abs(P_next - P))
        P = P_next
        if delta < tol.dare_step:
            break
    else:
        raise RiccatiError(f"Riccati iteration did not converge, last step {delta:.3e}")

    res = dare_residual(A, B, Q_w, R, gamma, P)
    if res > tol.dare_residual:
        raise RiccatiError(f"Riccati residual {res:.3e} above {tol.dare_residual:.1e}")
    return P


def dare_residual(A, B, Q_w, R, gamma, P) -> float:
    """Max-abs residual of the discounted Riccati recursion at P."""
    BPB = B.T @ P @ B
    BPA = B.T @ P @ A
    rhs = Q_w + gamma * (A.T @ P @ A) - gamma ** 2 * BPA.T @ np.linalg.solve(R + gamma * BPB, BPA)
    return float(np.max(np.abs(P - rhs)))


def lqr_gain(A, B, Q_w, R, gamma: float = 1.0, tol: Tolerances = DEFAULT):
    """Discounted LQR feedback u = K x with K = -(R + g B'PB)^-1 g B'PA."""
    P = solve_dare(A, B, Q_w, R, gamma, tol)
    K = -np.linalg.solve(R + gamma * B.T @ P @ B, gamma * B.T @ P @ A)
    return K, P


# ---------------------------------------------------------------------------
# quadratic programming
# ---------------------------------------------------------------------------

class Qp:
    """Strictly convex QP:  min 1/2 u'Hu + f'u  s.t.  G u <= w.

    H is symmetrized on construction and must have minimum eigenvalue above
    the configured floor.  G may be empty (unconstrained problem).
    """

    def __init__(self, H, f, G=None, w=None, tol: Tolerances = DEFAULT):
        H = check_finite(np.atleast_2d(H), "H")
        self.H = 0.5 * (H + H.T)
        self.f = check_finite(np.asarray(f, dtype=float).ravel(), "f")
        n = self.f.size
        if self.H.shape != (n, n):
            raise ValueError(f"H shape {self.H.shape} does not match f size {n}")
        min_eig = float(np.linalg.eigvalsh(self.H)[0])
        if min_eig <= tol.hessian_min_eig:
            raise ValueError(f"H must be positive definite, min eigenvalue {min_eig:.3e}")
        if G is None:
            G = np.zeros((0, n))
            w = np.zeros(0)
        self.G = check_finite(np.atleast_2d(G), "G") if np.size(G) else np.zeros((0, n))
        self.w = check_finite(np.asarray(w, dtype=float).ravel(), "w")
        if self.G.shape != (self.w.size, n):
            raise ValueError(f"G shape {self.G.shape} inconsistent with w size {self.w.size}")

    @property
    def n(self) -> int:
        return self.f.size

    @property
    def n_constraints(self) -> int:
        return self.w.size


class QpSolution:
    """Minimizer, the active constraint indices, and full multiplier vector."""

    def __init__(self, u, active_set, multipliers, iterations):
        self.u = u
        self.active_set = tuple(active_set)
        self.multipliers = multipliers
        self.iterations = iterations


def _kkt_solve(H, grad, G_act):
    """Equality-constrained step: min 1/2 p'Hp + grad'p s.t. G_act p = 0."""
    k = G_act.shape[0]
    n = H.shape[0]
    if k == 0:
        return np.linalg.solve(H, -grad), np.zeros(0)
    kkt = np.zeros((n + k, n + k))
    kkt[:n, :n] = H
    kkt[:n, n:] = G_act.T
    kkt[n:, :n] = G_act
    rhs = np.concatenate([-grad, np.zeros(k)])
    sol = np.linalg.solve(kkt, rhs)
    return sol[:n], sol[n:]


def qp_solve(qp: Qp, tol: Tolerances = DEFAULT) -> QpSolution:
    """Primal active-set method for a strictly convex inequality-constrained QP.

    Deterministic by construction: ties in both the entering and the leaving
    constraint are broken toward the lowest index.  Raises QpInfeasibleError
    when the constraint set is empty and QpCyclingError if the iteration cap
    is hit.
    """
    n, nc = qp.n, qp.n_constraints
    G, w, H, f = qp.G, qp.w, qp.H, qp.f

    # feasible start: origin if possible, else the Chebyshev center
    u = np.zeros(n)
    if nc and np.any(G @ u > w):
        center, radius = chebyshev_center(G, w, tol)
        if center is None or np.max(G @ center - w) > tol.qp_kkt:
            raise QpInfeasibleError("QP constraint set is empty")
        u = center

    work: list[int] = [i for i in range(nc) if w[i] - G[i] @ u <= tol.qp_active]
    # keep only linearly independent rows in the initial working set
    pruned: list[int] = []
    for i in work:
        rows = G[pruned + [i]]
        if np.linalg.matrix_rank(rows) == len(pruned) + 1:
            pruned.append(i)
    work = pruned

    max_iter = tol.qp_max_iter_scale * (nc + n) + 100
    for it in range(max_iter):
        grad = H @ u + f
        G_act = G[work] if work else np.zeros((0, n))
        p, lam = _kkt_solve(H, grad, G_act)

        if np.max(np.abs(p), initial=0.0) <= tol.qp_active:
            neg = [j for j, l in enumerate(lam) if l < -tol.qp_multiplier]
            if not neg:
                multipliers = np.zeros(nc)
                for j, idx in enumerate(work):
                    multipliers[idx] = max(lam[j], 0.0)
                return QpSolution(u, sorted(work), multipliers, it)
            # drop the lowest-index working constraint with a negative multiplier
            leave = min(neg, key=lambda j: work[j])
            work.pop(leave)
            continue

        # step length to the nearest blocking constraint
        alpha = 1.0
        block = -1
        for i in range(nc):
            if i in work:
                continue
            gp = G[i] @ p
            if gp > tol.qp_active:
                a_i = (w[i] - G[i] @ u) / gp
                if a_i < alpha - 1e-14:
                    alpha = max(a_i, 0.0)
                    block = i
        u = u + alpha * p
        if block >= 0:
            rows = G[work + [block]]
            if np.linalg.matrix_rank(rows) == len(work) + 1:
                work.append(block)

    raise QpCyclingError(f"active-set iteration cap {max_iter} exceeded")


def kkt_residual(qp: Qp, sol: QpSolution) -> float:
    """Max of stationarity, primal feasibility, and complementarity residuals."""
    stat = qp.H @ sol.u + qp.f
    if qp.n_constraints:
        stat = stat + qp.G.T @ sol.multipliers
        primal = np.max(np.maximum(qp.G @ sol.u - qp.w, 0.0))
        comp = np.max(np.abs(sol.multipliers * (qp.G @ sol.u - qp.w)))
    else:
        primal = 0.0
        comp = 0.0
    return float(max(np.max(np.abs(stat)), primal, comp))


# ---------------------------------------------------------------------------
# polyhedra
# ---------------------------------------------------------------------------

def chebyshev_center(G, w, tol: Tolerances = DEFAULT):
    """Center and radius of the largest ball inside {x : G x <= w}.

    Returns (None, -inf) for an empty polyhedron.  Free variables are boxed
    at +-tol.lp_bound so the LP stays bounded for unbounded polyhedra; the
    radius is likewise capped at tol.lp_bound.
    """
    G = np.atleast_2d(np.asarray(G, dtype=float))
    w = np.asarray(w, dtype=float).ravel()
    if G.shape[0] == 0:
        return np.zeros(G.shape[1]), tol.lp_bound
    n = G.shape[1]
    norms = np.linalg.norm(G, axis=1)
    # variables (x, r): maximize r s.t. Gx + ||G_i|| r <= w
    c = np.zeros(n + 1)
    c[-1] = -1.0
    A_ub = np.hstack([G, norms[:, None]])
    bounds = [(-tol.lp_bound, tol.lp_bound)] * n + [(0.0, tol.lp_bound)]
    res = linprog(c, A_ub=A_ub, b_ub=w, bounds=bounds, method="highs")
    if not res.success:
        return None, -np.inf
    return res.x[:n], float(res.x[n])


def lp_feasible(G, w, strict_tol: float, tol: Tolerances = DEFAULT):
    """Interior point of {x : G x <= w}, or None.

    Returns the Chebyshev center when the inscribed radius exceeds strict_tol,
    which guarantees G x <= w - strict_tol * ||rows|| at the returned point.
    """
    center, radius = chebyshev_center(G, w, tol)
    if center is None or radius <= strict_tol:
        return None
    return center
