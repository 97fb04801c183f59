"""Exact transportation LP with explicit optimal-basis extraction.

The domain-adaptation step couples the source and target samples through a
transportation linear program with uniform marginals.  Downstream region
computations need the optimal *basis*, not just the plan, so the LP is solved
with a revised simplex on the transportation polytope (one redundant equality
dropped, Bland's rule for determinism under heavy degeneracy) rather than a
black-box solver.

Along the line ``y = a + b z`` the LP cost is quadratic in z coordinatewise,
and the set of z for which a fixed basis stays optimal is the solution of the
reduced-cost system ``p + q z + f z^2 >= 0``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .intervals import IntervalSet, QuadIneq, contained_interval, solve_quad_system

_RC_TOL = 1e-9
_RATIO_TOL = 1e-11
_MAX_PIVOTS = 100_000


@dataclass
class DomainData:
    """Feature matrix and response vector for one domain."""

    X: np.ndarray
    Y: np.ndarray

    def __post_init__(self):
        self.X = np.atleast_2d(np.asarray(self.X, dtype=float))
        self.Y = np.asarray(self.Y, dtype=float).ravel()
        if self.X.shape[0] != self.Y.shape[0]:
            raise ValueError("feature/response row count mismatch")

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]


class _Tableau:
    """Constraint structure of the n_s x n_t transportation polytope.

    Row-major flattening: variable (i, j) lives at index i*n_t + j.  The
    equality system keeps all n_s row-sum constraints and the first n_t - 1
    column-sum constraints; the last column constraint is redundant.
    """

    def __init__(self, n_s: int, n_t: int):
        self.n_s = n_s
        self.n_t = n_t
        self.m = n_s + n_t - 1
        nv = n_s * n_t
        v = np.arange(nv)
        self.i_idx = v // n_t
        self.j_idx = v % n_t
        H = np.zeros((self.m, nv))
        H[self.i_idx, v] = 1.0
        keep = self.j_idx < n_t - 1
        H[n_s + self.j_idx[keep], v[keep]] = 1.0
        self.H = H
        self.h = np.concatenate(
            [np.full(n_s, 1.0 / n_s), np.full(n_t - 1, 1.0 / n_t)]
        )

    def northwest_basis(self) -> list[int]:
        """Degenerate-safe northwest-corner basic feasible cells."""
        n_s, n_t = self.n_s, self.n_t
        supply = 1.0 / n_s
        demand = 1.0 / n_t
        rem_s = supply
        rem_d = demand
        i = j = 0
        basis = []
        while i < n_s and j < n_t:
            basis.append(i * n_t + j)
            if len(basis) == self.m:
                break
            if rem_s < rem_d - 1e-15:
                rem_d -= rem_s
                i += 1
                rem_s = supply
            elif rem_d < rem_s - 1e-15:
                rem_s -= rem_d
                j += 1
                rem_d = demand
            else:
                # Tie: advance one direction, leaving a degenerate cell.
                if i < n_s - 1:
                    i += 1
                    rem_s = supply
                    rem_d = 0.0
                else:
                    j += 1
                    rem_d = demand
                    rem_s = 0.0
        return basis

    def reduced_costs(self, lu, basis: np.ndarray, cost: np.ndarray) -> np.ndarray:
        """Reduced cost of every variable under the given basis factorization."""
        y = lu_solve(lu, cost[basis], trans=1)
        y_row = y[: self.n_s]
        y_col = np.append(y[self.n_s :], 0.0)
        return cost - y_row[self.i_idx] - y_col[self.j_idx]


_tableau_cache: dict[tuple[int, int], _Tableau] = {}


def _tableau(n_s: int, n_t: int) -> _Tableau:
    key = (n_s, n_t)
    tab = _tableau_cache.get(key)
    if tab is None:
        tab = _tableau_cache[key] = _Tableau(n_s, n_t)
    return tab


@dataclass
class TransportSolution:
    """Optimal plan, basis, and the data needed for parametric analysis."""

    plan: np.ndarray
    basis: tuple[int, ...]
    fixed_cost: np.ndarray
    n_source: int
    n_target: int
    objective: float
    pivots: int
    _lu: tuple = field(repr=False, default=None)
    _basis_order: np.ndarray = field(repr=False, default=None)


def cost_vector(
    source: DomainData, target: DomainData
) -> tuple[np.ndarray, np.ndarray]:
    """Fixed feature-distance costs c' and the response-difference map Theta.

    Entry (i, j) of c' is ||X^s_i - X^t_j||^2 in row-major order, and
    Theta applied to the stacked response gives Y^s_i - Y^t_j in the same
    order, so the full LP cost at stacked response y is
    ``c' + (Theta y) * (Theta y)``.
    """
    if source.p != target.p:
        raise ValueError("source and target feature counts differ")
    diff = source.X[:, None, :] - target.X[None, :, :]
    c_prime = np.einsum("ijk,ijk->ij", diff, diff).ravel()
    n_s, n_t = source.n, target.n
    Theta = np.hstack(
        [np.kron(np.eye(n_s), np.ones((n_t, 1))), np.kron(np.ones((n_s, 1)), -np.eye(n_t))]
    )
    return c_prime, Theta


def solve_transport(
    cost: np.ndarray,
    n_source: int,
    n_target: int,
    basis0=None,
) -> TransportSolution:
    """Minimize <t, cost> over the uniform-marginal transportation polytope.

    Returns an optimal basic feasible solution with its basis index set.
    ``basis0`` warm-starts the simplex from a previous basis (the polytope and
    constraints never change along a scan, only the costs).
    """
    tab = _tableau(n_source, n_target)
    cost = np.asarray(cost, dtype=float).ravel()
    if cost.size != n_source * n_target:
        raise ValueError("cost vector has wrong length")
    basis = list(basis0) if basis0 is not None else tab.northwest_basis()
    tol = _RC_TOL * (1.0 + float(np.max(np.abs(cost))))

    pivots = 0
    while True:
        barr = np.array(basis)
        lu = lu_factor(tab.H[:, barr])
        x_b = lu_solve(lu, tab.h)
        rc = tab.reduced_costs(lu, barr, cost)
        rc[barr] = 0.0
        negative = np.flatnonzero(rc < -tol)
        if negative.size == 0:
            break
        entering = int(negative[0])  # Bland's rule: smallest index
        d = lu_solve(lu, tab.H[:, entering])
        movable = d > _RATIO_TOL
        if not movable.any():
            raise RuntimeError("unbounded transportation LP (internal error)")
        ratios = np.where(movable, np.maximum(x_b, 0.0) / np.where(movable, d, 1.0), np.inf)
        theta = float(np.min(ratios))
        ties = np.flatnonzero(ratios <= theta + _RATIO_TOL)
        leaving_pos = int(ties[np.argmin(barr[ties])])  # Bland: smallest variable
        basis[leaving_pos] = entering
        pivots += 1
        if pivots > _MAX_PIVOTS:
            raise RuntimeError("transportation simplex failed to terminate")

    x_b = np.maximum(x_b, 0.0)
    plan = np.zeros(n_source * n_target)
    plan[barr] = x_b
    objective = float(cost @ plan)
    return TransportSolution(
        plan=plan.reshape(n_source, n_target),
        basis=tuple(sorted(basis)),
        fixed_cost=cost,
        n_source=n_source,
        n_target=n_target,
        objective=objective,
        pivots=pivots,
        _lu=lu,
        _basis_order=barr,
    )


def transform_source(plan: np.ndarray, target: DomainData) -> DomainData:
    """Barycentric mapping of the source sample into the target domain."""
    n_s = plan.shape[0]
    if plan.shape[1] != target.n:
        raise ValueError("plan/target dimension mismatch")
    return DomainData(X=n_s * plan @ target.X, Y=n_s * plan @ target.Y)


def omega(plan: np.ndarray) -> np.ndarray:
    """Block matrix mapping the stacked response to (transformed source; target)."""
    n_s, n_t = plan.shape
    n = n_s + n_t
    out = np.zeros((n, n))
    out[:n_s, n_s:] = n_s * plan
    out[n_s:, n_s:] = np.eye(n_t)
    return out


def _parametric_reduced_coeffs(
    solution: TransportSolution,
    c_prime: np.ndarray,
    theta_a: np.ndarray,
    theta_b: np.ndarray,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Reduced-cost coefficient vectors (p, q, f) over nonbasic variables.

    The LP cost along the line is c' + (theta_a + theta_b z)^2 elementwise,
    i.e. coefficientwise quadratic with constant c' + theta_a^2, linear
    2 theta_a theta_b, and quadratic theta_b^2 parts.
    """
    tab = _tableau(solution.n_source, solution.n_target)
    p_t = c_prime + theta_a * theta_a
    q_t = 2.0 * theta_a * theta_b
    f_t = theta_b * theta_b
    barr = solution._basis_order
    lu = solution._lu
    nonbasic = np.ones(p_t.size, dtype=bool)
    nonbasic[barr] = False
    coeffs = []
    for g in (p_t, q_t, f_t):
        rc = tab.reduced_costs(lu, barr, g)
        coeffs.append(rc[nonbasic])
    return coeffs[0], coeffs[1], coeffs[2]


def region_Zu(
    solution: TransportSolution,
    c_prime: np.ndarray,
    theta_a: np.ndarray,
    theta_b: np.ndarray,
) -> IntervalSet:
    """All z for which the solution's basis remains optimal (full interval set)."""
    if solution.n_source * solution.n_target == 1:
        return [(-np.inf, np.inf)]
    p, q, f = _parametric_reduced_coeffs(solution, c_prime, theta_a, theta_b)
    system = [QuadIneq(wi, ri, oi, leq=False) for wi, ri, oi in zip(p, q, f)]
    return solve_quad_system(system)


def basis_interval(
    solution: TransportSolution,
    c_prime: np.ndarray,
    theta_a: np.ndarray,
    theta_b: np.ndarray,
    z0: float,
) -> tuple[float, float]:
    """The basis-invariance interval containing z0 (scan fast path)."""
    if solution.n_source * solution.n_target == 1:
        return -np.inf, np.inf
    p, q, f = _parametric_reduced_coeffs(solution, c_prime, theta_a, theta_b)
    return contained_interval(-p, -q, -f, z0)
