"""Explicit solution of box-constrained linear-quadratic MPC.

The finite-horizon regulation problem

    min_U  sum_t gamma^t (x_t' Q_w x_t + u_t' R u_t) + gamma^N x_N' P x_N
    s.t.   x_{t+1} = A x_t + B u_t,  u_t in U,  (optional) x_{N-1} in X_f

is condensed to a QP in the stacked input sequence U with the state as a
parameter, then solved multiparametrically: every candidate active set with
linearly independent rows yields an affine optimizer and affine multipliers,
and the polyhedron where that active set is optimal becomes a critical region.
The union of full-dimensional regions over the domain is the piecewise-affine
control law.  An online QP path over the same condensed data serves as the
validation oracle.
"""

import hashlib
import json

import numpy as np

from itertools import combinations

from .numerics import Qp, QpSolution, chebyshev_center, check_finite, qp_solve
from .tolerances import DEFAULT, Tolerances


class MpcError(Exception):
    pass


class LawIncompleteError(MpcError):
    """A state inside the law's domain matched no critical region."""


class LinearSystem:
    """Discrete-time model x+ = A x + B u with operating-point metadata."""

    def __init__(self, A, B, x_ss=None, u_ss=None, dt: float = 1.0):
        self.A = check_finite(np.atleast_2d(A), "A")
        self.B = check_finite(np.atleast_2d(B), "B")
        n = self.A.shape[0]
        if self.A.shape != (n, n) or self.B.shape[0] != n:
            raise MpcError("A must be square and share rows with B")
        self.x_ss = np.zeros(n) if x_ss is None else np.asarray(x_ss, dtype=float)
        self.u_ss = np.zeros(self.B.shape[1]) if u_ss is None else np.asarray(u_ss, dtype=float)
        self.dt = float(dt)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]


class MpcFormulation:
    """Everything needed to condense the regulation problem.

    u_lo / u_hi bound each stage input; domain_lo / domain_hi bound the state
    box over which the explicit law will be built.  terminal_box, when given,
    constrains x_{N-1} as a (lo, hi) pair.
    """

    def __init__(self, system: LinearSystem, N: int, Q_w, R, P, gamma: float,
                 u_lo, u_hi, domain_lo, domain_hi, terminal_box=None):
        if N < 1:
            raise MpcError("horizon must be at least 1")
        self.system = system
        self.N = int(N)
        self.Q_w = check_finite(np.atleast_2d(Q_w), "Q_w")
        self.R = check_finite(np.atleast_2d(R), "R")
        self.P = check_finite(np.atleast_2d(P), "P")
        self.gamma = float(gamma)
        self.u_lo = np.asarray(u_lo, dtype=float)
        self.u_hi = np.asarray(u_hi, dtype=float)
        self.domain_lo = np.asarray(domain_lo, dtype=float)
        self.domain_hi = np.asarray(domain_hi, dtype=float)
        self.terminal_box = terminal_box
        if np.any(self.u_lo >= self.u_hi):
            raise MpcError("input box must be nonempty")
        if np.any(self.domain_lo >= self.domain_hi):
            raise MpcError("domain box must be nonempty")

    def digest(self) -> str:
        """Stable hash of the formulation data, recorded in serialized laws."""
        h = hashlib.sha256()
        h.update(np.int64(self.N).tobytes())
        h.update(np.float64(self.gamma).tobytes())
        for arr in (self.system.A, self.system.B, self.Q_w, self.R, self.P,
                    self.u_lo, self.u_hi, self.domain_lo, self.domain_hi):
            h.update(np.ascontiguousarray(arr, dtype=float).tobytes())
        if self.terminal_box is not None:
            for arr in self.terminal_box:
                h.update(np.ascontiguousarray(arr, dtype=float).tobytes())
        return h.hexdigest()

    def domain_polyhedron(self):
        n = self.system.n
        H = np.vstack([np.eye(n), -np.eye(n)])
        h = np.concatenate([self.domain_hi, -self.domain_lo])
        return H, h


class CondensedQp:
    """min_U 1/2 U'HU + x'FU  s.t.  G U <= W + S x."""

    def __init__(self, H, F, G, W, S, N, n, m):
        self.H = H
        self.F = F
        self.G = G
        self.W = W
        self.S = S
        self.N = N
        self.n = n
        self.m = m


class CriticalRegion:
    """Polyhedron H_r x <= h_r with first-move law u = K x + c."""

    def __init__(self, H_r, h_r, K, c, active_set, radius):
        self.H_r = H_r
        self.h_r = h_r
        self.K = K
        self.c = c
        self.active_set = tuple(int(i) for i in active_set)
        self.radius = float(radius)

    def violation(self, x) -> float:
        if self.H_r.shape[0] == 0:
            return 0.0
        return float(np.max(self.H_r @ x - self.h_r))


class PWAControlLaw:
    """Ordered critical regions over a domain polytope plus build metadata."""

    def __init__(self, regions, domain, metadata):
        self.regions = list(regions)
        self.domain = domain  # (H_dom, h_dom)
        self.metadata = dict(metadata)

    def __len__(self) -> int:
        return len(self.regions)


# ---------------------------------------------------------------------------
# condensation
# ---------------------------------------------------------------------------

def _prediction_matrices(A, B, N):
    """Stacked maps X = Abar x0 + Bbar U with X = [x_1; ...; x_N]."""
    n, m = B.shape
    Abar = np.zeros((N * n, n))
    Bbar = np.zeros((N * n, N * m))
    Apow = [np.eye(n)]
    for _ in range(N):
        Apow.append(A @ Apow[-1])
    for t in range(1, N + 1):
        Abar[(t - 1) * n:t * n] = Apow[t]
        for j in range(t):
            Bbar[(t - 1) * n:t * n, j * m:(j + 1) * m] = Apow[t - 1 - j] @ B
    return Abar, Bbar


def condense(form: MpcFormulation) -> CondensedQp:
    """Eliminate the dynamics by substitution and stack the constraints.

    The returned objective equals the stage-summed cost up to the x-only
    constant gamma^0 x'Q_w x, which does not move the minimizer.
    """
    A, B = form.system.A, form.system.B
    n, m, N = form.system.n, form.system.m, form.N
    g = form.gamma

    Abar, Bbar = _prediction_matrices(A, B, N)
    q_blocks = [g ** t * form.Q_w for t in range(1, N)] + [g ** N * form.P]
    Qbar = np.zeros((N * n, N * n))
    for t, Qt in enumerate(q_blocks):
        Qbar[t * n:(t + 1) * n, t * n:(t + 1) * n] = Qt
    Rbar = np.zeros((N * m, N * m))
    for t in range(N):
        Rbar[t * m:(t + 1) * m, t * m:(t + 1) * m] = g ** t * form.R

    H = 2.0 * (Rbar + Bbar.T @ Qbar @ Bbar)
    H = 0.5 * (H + H.T)
    F = 2.0 * Abar.T @ Qbar @ Bbar

    # stage input boxes: u_t <= hi and -u_t <= -lo for every stage
    rows, offs, s_rows = [], [], []
    for t in range(N):
        sel = np.zeros((m, N * m))
        sel[:, t * m:(t + 1) * m] = np.eye(m)
        rows.append(sel)
        offs.append(form.u_hi)
        s_rows.append(np.zeros((m, n)))
        rows.append(-sel)
        offs.append(-form.u_lo)
        s_rows.append(np.zeros((m, n)))

    if form.terminal_box is not None and N >= 2:
        t_lo, t_hi = (np.asarray(b, dtype=float) for b in form.terminal_box)
        k = N - 1  # x_{N-1} is block k-1 of X
        blockA = Abar[(k - 1) * n:k * n]
        blockB = Bbar[(k - 1) * n:k * n]
        rows.append(blockB)
        offs.append(t_hi)
        s_rows.append(-blockA)
        rows.append(-blockB)
        offs.append(-t_lo)
        s_rows.append(blockA)

    G = np.vstack(rows)
    W = np.concatenate(offs)
    S = np.vstack(s_rows)
    return CondensedQp(H, F, G, W, S, N, n, m)


def stage_objective(form: MpcFormulation, x0, U) -> float:
    """Direct stage-summed objective, used to validate condensation."""
    A, B = form.system.A, form.system.B
    m = form.system.m
    x = np.asarray(x0, dtype=float)
    total = 0.0
    for t in range(form.N):
        u = U[t * m:(t + 1) * m]
        total += form.gamma ** t * (x @ form.Q_w @ x + u @ form.R @ u)
        x = A @ x + B @ u
    total += form.gamma ** form.N * (x @ form.P @ x)
    return float(total)


# ---------------------------------------------------------------------------
# online oracle
# ---------------------------------------------------------------------------

def solve_online(cqp: CondensedQp, x, tol: Tolerances = DEFAULT) -> QpSolution:
    """Full online QP solution at parameter x."""
    x = np.asarray(x, dtype=float)
    return qp_solve(Qp(cqp.H, cqp.F.T @ x, cqp.G, cqp.W + cqp.S @ x, tol=tol), tol=tol)


def online_mpc(cqp: CondensedQp, x, tol: Tolerances = DEFAULT) -> np.ndarray:
    """First input move of the online QP at parameter x."""
    return solve_online(cqp, x, tol).u[:cqp.m]


# ---------------------------------------------------------------------------
# multiparametric solve
# ---------------------------------------------------------------------------

def _normalize_rows(H, h, tol: Tolerances):
    """Scale rows to unit norm; drop trivial rows; None if plainly empty."""
    keep_H, keep_h = [], []
    for row, off in zip(H, h):
        nrm = np.linalg.norm(row)
        if nrm < 1e-14:
            if off < -tol.region_membership:
                return None, None
            continue
        keep_H.append(row / nrm)
        keep_h.append(off / nrm)
    if not keep_H:
        return np.zeros((0, H.shape[1])), np.zeros(0)
    return np.array(keep_H), np.array(keep_h)


def _reduce_rows(H, h, tol: Tolerances):
    """Drop rows whose removal cannot enlarge the polyhedron (LP certified)."""
    from scipy.optimize import linprog

    keep = list(range(H.shape[0]))
    i = 0
    while i < len(keep):
        idx = keep[i]
        others = [j for j in keep if j != idx]
        if not others:
            i += 1
            continue
        res = linprog(-H[idx], A_ub=H[others], b_ub=h[others],
                      bounds=[(-tol.lp_bound, tol.lp_bound)] * H.shape[1],
                      method="highs")
        if res.success and -res.fun <= h[idx] + tol.redundancy:
            keep.pop(i)
        else:
            i += 1
    return H[keep], h[keep]


def solve_mpqp(cqp: CondensedQp, domain, tol: Tolerances = DEFAULT,
               max_constraints: int = 30) -> PWAControlLaw:
    """Enumerate optimal active sets of the parametric QP over the domain.

    domain is an (H_dom, h_dom) polyhedron in state space.  Candidate active
    sets are all row subsets of size <= dim(U) with linearly independent rows,
    visited in lexicographic order so the law is deterministic.  Singular KKT
    systems are skipped and counted in the metadata.
    """
    H_dom, h_dom = (np.atleast_2d(np.asarray(domain[0], dtype=float)),
                    np.asarray(domain[1], dtype=float))
    nc = cqp.G.shape[0]
    nu = cqp.H.shape[0]
    if nc > max_constraints:
        raise MpcError(f"{nc} constraints exceed the enumeration guard {max_constraints}")

    Hinv = np.linalg.inv(cqp.H)
    HinvFT = Hinv @ cqp.F.T
    regions = []
    skipped = 0
    candidates = 0

    for size in range(0, min(nu, nc) + 1):
        for active in combinations(range(nc), size):
            candidates += 1
            idx = list(active)
            G_A = cqp.G[idx]
            if size and np.linalg.matrix_rank(G_A, tol=1e-10) < size:
                continue
            if size:
                Mq = G_A @ Hinv @ G_A.T
                try:
                    Mq_inv = np.linalg.inv(Mq)
                except np.linalg.LinAlgError:
                    skipped += 1
                    continue
                if not np.all(np.isfinite(Mq_inv)) or np.linalg.cond(Mq) > 1e12:
                    skipped += 1
                    continue
                S_A = cqp.S[idx]
                W_A = cqp.W[idx]
                Lam = -Mq_inv @ (S_A + G_A @ HinvFT)
                lam0 = -Mq_inv @ W_A
                T = -HinvFT - Hinv @ G_A.T @ Lam
                t_off = -Hinv @ G_A.T @ lam0
            else:
                Lam = np.zeros((0, cqp.n))
                lam0 = np.zeros(0)
                T = -HinvFT
                t_off = np.zeros(nu)

            # snap first-move coordinates pinned by an active stage-0 input
            # bound to the exact bound, so saturated pieces carry no rounding
            for row_idx in active:
                row = cqp.G[row_idx]
                nz = np.flatnonzero(row)
                if (nz.size == 1 and nz[0] < cqp.m and abs(row[nz[0]]) == 1.0
                        and not np.any(cqp.S[row_idx])):
                    j = int(nz[0])
                    T[j, :] = 0.0
                    t_off[j] = cqp.W[row_idx] * row[nz[0]]

            inactive = [i for i in range(nc) if i not in active]
            rows = [H_dom]
            offs = [h_dom]
            if inactive:
                G_I = cqp.G[inactive]
                rows.append(G_I @ T - cqp.S[inactive])
                offs.append(cqp.W[inactive] - G_I @ t_off)
            if size:
                rows.append(-Lam)
                offs.append(lam0)
            R_H, R_h = _normalize_rows(np.vstack(rows), np.concatenate(offs), tol)
            if R_H is None:
                continue
            center, radius = chebyshev_center(R_H, R_h, tol)
            if center is None or radius <= tol.region_min_radius:
                continue
            R_H, R_h = _reduce_rows(R_H, R_h, tol)
            regions.append(CriticalRegion(R_H, R_h, T[:cqp.m].copy(),
                                          t_off[:cqp.m].copy(), active, radius))

    if not regions:
        center, radius = chebyshev_center(H_dom, h_dom, tol)
        if center is not None and radius > tol.region_min_radius:
            raise MpcError("no critical regions found over a nonempty domain")

    meta = {
        "N": cqp.N,
        "n": cqp.n,
        "m": cqp.m,
        "candidates": candidates,
        "skipped_degenerate": skipped,
        "region_min_radius": tol.region_min_radius,
        "membership_tol": tol.region_membership,
    }
    return PWAControlLaw(regions, (H_dom, h_dom), meta)


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------

def evaluate_pwa(law: PWAControlLaw, x, tol: Tolerances = DEFAULT):
    """First-move input at x, or None when x is outside the law's domain.

    The first stored region containing x within the membership tolerance wins,
    which makes boundary ties deterministic.  A state inside the domain that
    matches no region raises LawIncompleteError.
    """
    x = np.asarray(x, dtype=float)
    H_dom, h_dom = law.domain
    if H_dom.shape[0] and np.max(H_dom @ x - h_dom) > tol.region_membership:
        return None
    for region in law.regions:
        if region.violation(x) <= tol.region_membership:
            return region.K @ x + region.c
    raise LawIncompleteError(f"no region contains {x.tolist()}")


def evaluate_pwa_nearest(law: PWAControlLaw, x, tol: Tolerances = DEFAULT) -> np.ndarray:
    """Like evaluate_pwa but falls back to the least-violated region.

    Used when trajectories leave the mp-QP domain: the region with minimal
    worst-case constraint violation (lowest index on ties) supplies the law.
    """
    x = np.asarray(x, dtype=float)
    best = None
    best_v = np.inf
    for region in law.regions:
        v = region.violation(x)
        if v <= tol.region_membership:
            return region.K @ x + region.c
        if v < best_v - 1e-15:
            best, best_v = region, v
    if best is None:
        raise LawIncompleteError("law has no regions")
    return best.K @ x + best.c


def evaluate_pwa_batch(law: PWAControlLaw, X, tol: Tolerances = DEFAULT) -> np.ndarray:
    """Vectorized evaluate_pwa_nearest over rows of X."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    n_pts = X.shape[0]
    m = law.regions[0].K.shape[0]
    viol = np.empty((len(law.regions), n_pts))
    for r, region in enumerate(law.regions):
        if region.H_r.shape[0] == 0:
            viol[r] = 0.0
        else:
            viol[r] = np.max(region.H_r @ X.T - region.h_r[:, None], axis=0)
    inside = viol <= tol.region_membership
    out = np.empty((n_pts, m))
    any_inside = inside.any(axis=0)
    first_inside = np.argmax(inside, axis=0)
    nearest = np.argmin(viol, axis=0)
    choice = np.where(any_inside, first_inside, nearest)
    for r in np.unique(choice):
        mask = choice == r
        region = law.regions[r]
        out[mask] = X[mask] @ region.K.T + region.c
    return out


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def law_to_dict(law: PWAControlLaw) -> dict:
    return {
        "format": "pwa-law-v1",
        "metadata": law.metadata,
        "domain": {"H": law.domain[0].tolist(), "h": law.domain[1].tolist()},
        "regions": [
            {
                "active_set": list(r.active_set),
                "H": r.H_r.tolist(),
                "h": r.h_r.tolist(),
                "K": r.K.tolist(),
                "c": r.c.tolist(),
                "radius": r.radius,
            }
            for r in law.regions
        ],
    }


def law_from_dict(d: dict) -> PWAControlLaw:
    if d.get("format") != "pwa-law-v1":
        raise MpcError(f"unknown law format {d.get('format')!r}")
    regions = [
        CriticalRegion(np.array(r["H"], dtype=float), np.array(r["h"], dtype=float),
                       np.array(r["K"], dtype=float), np.array(r["c"], dtype=float),
                       r["active_set"], r["radius"])
        for r in d["regions"]
    ]
    domain = (np.array(d["domain"]["H"], dtype=float),
              np.array(d["domain"]["h"], dtype=float))
    return PWAControlLaw(regions, domain, d["metadata"])


def save_law(law: PWAControlLaw, path) -> None:
    with open(path, "w") as fh:
        json.dump(law_to_dict(law), fh, indent=1, sort_keys=True)


def load_law(path) -> PWAControlLaw:
    with open(path) as fh:
        return law_from_dict(json.load(fh))
