"""Static optimal distribution problem and its KKT machinery.

The problem is min sum_k P_k(lambda_k) subject to B lambda + supply = 0
with separable strictly convex edge costs. Quadratic costs are solved in
closed form through the weighted Laplacian pseudoinverse; the smooth
quartic-plus-quadratic family is solved by a damped Newton method on the
dual residual g(zeta) = B grad_inv(B^T zeta) + supply restricted to the
hyperplane 1^T zeta = 0, where the Jacobian is nonsingular.

``oracle_projected_gradient`` is an independent brute-force solver used
by the acceptance suite; it never shares a code path with
``solve_static``.
"""

from dataclasses import dataclass

import numpy as np

from .errors import (
    ConvergenceError,
    DimensionError,
    DisconnectedGraphError,
    OracleError,
    UnbalancedSupplyError,
)
from .graph import (
    circulation_projector,
    incidence,
    is_connected,
    laplacian_pinv,
    weighted_laplacian,
)

_BALANCE_TOL = 1e-10
_NEWTON_MAX_ITER = 200
_SCALAR_NEWTON_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class QuadraticCost:
    """Separable cost (1/2) q_k lambda_k^2 with q_k > 0."""

    weights: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.weights, dtype=float)
        if q.ndim != 1 or np.any(q <= 0):
            raise ValueError("quadratic weights must be a vector of positive reals")
        object.__setattr__(self, "weights", q)

    @property
    def edge_count(self):
        return self.weights.shape[0]

    def value(self, flow):
        flow = np.asarray(flow, dtype=float)
        return 0.5 * float(self.weights @ flow**2)

    def gradient(self, flow):
        return self.weights * np.asarray(flow, dtype=float)

    def hessian_diag(self, flow):
        return np.broadcast_to(self.weights, np.shape(flow)).copy()

    def gradient_inverse(self, sigma):
        return np.asarray(sigma, dtype=float) / self.weights

    def conjugate(self, sigma):
        sigma = np.asarray(sigma, dtype=float)
        return 0.5 * float(sigma @ (sigma / self.weights))


@dataclass(frozen=True, eq=False)
class QuarticCost:
    """Separable cost a_k lambda_k^4 / 4 + b_k lambda_k^2 / 2, a_k >= 0, b_k > 0."""

    quartic: np.ndarray
    quadratic: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.quartic, dtype=float)
        b = np.asarray(self.quadratic, dtype=float)
        if a.shape != b.shape or a.ndim != 1:
            raise DimensionError("quartic and quadratic coefficients must be equal-length vectors")
        if np.any(a < 0) or np.any(b <= 0):
            raise ValueError("need a_k >= 0 and b_k > 0 for strict convexity")
        object.__setattr__(self, "quartic", a)
        object.__setattr__(self, "quadratic", b)

    @property
    def edge_count(self):
        return self.quadratic.shape[0]

    def value(self, flow):
        flow = np.asarray(flow, dtype=float)
        return float(np.sum(self.quartic * flow**4 / 4.0 + self.quadratic * flow**2 / 2.0))

    def gradient(self, flow):
        flow = np.asarray(flow, dtype=float)
        return self.quartic * flow**3 + self.quadratic * flow

    def hessian_diag(self, flow):
        flow = np.asarray(flow, dtype=float)
        return 3.0 * self.quartic * flow**2 + self.quadratic

    def gradient_inverse(self, sigma):
        """Componentwise inverse of the strictly increasing scalar gradient.

        Safeguarded Newton with a bisection fallback on the bracket
        [-|s|/b - 1, |s|/b + 1], which always contains the unique root.
        """
        sigma = np.asarray(sigma, dtype=float)
        a, b = self.quartic, self.quadratic
        lo = -np.abs(sigma) / b - 1.0
        hi = np.abs(sigma) / b + 1.0
        x = sigma / b
        f = a * x**3 + b * x - sigma
        for _ in range(_NEWTON_MAX_ITER):
            if np.all(np.abs(f) <= _SCALAR_NEWTON_TOL):
                break
            step = f / (3.0 * a * x**2 + b)
            x_new = x - step
            outside = (x_new < lo) | (x_new > hi)
            if np.any(outside):
                x_new = np.where(outside, 0.5 * (lo + hi), x_new)
            f_new = a * x_new**3 + b * x_new - sigma
            # keep the bracket tight for the bisection fallback
            positive = f_new > 0
            hi = np.where(positive, x_new, hi)
            lo = np.where(positive, lo, x_new)
            x, f = x_new, f_new
        return x

    def conjugate(self, sigma):
        flow = self.gradient_inverse(sigma)
        return float(np.asarray(sigma, dtype=float) @ flow) - self.value(flow)


@dataclass(frozen=True, eq=False)
class KktPoint:
    """Primal flow, dual node potential, and the supply they solve."""

    flow: np.ndarray
    potential: np.ndarray
    supply: np.ndarray


def _check_supply(graph, supply):
    supply = np.asarray(supply, dtype=float)
    if supply.shape != (graph.node_count,):
        raise DimensionError(f"supply must have shape ({graph.node_count},)")
    if abs(supply.sum()) > _BALANCE_TOL * max(1.0, np.abs(supply).max()):
        raise UnbalancedSupplyError(
            f"supply not balanced: 1^T supply = {supply.sum():.3g}")
    return supply


def solve_static(graph, cost, supply):
    """Optimal flow and dual potential for a balanced supply on a connected graph.

    Quadratic costs are solved exactly: zeta = -L_Q^+ supply and
    lambda = Q^{-1} B^T zeta. Other costs use damped Newton on the dual
    residual, normalized to 1^T zeta = 0. The returned point satisfies
    both KKT residuals to 1e-10.
    """
    supply = _check_supply(graph, supply)
    if not is_connected(graph):
        raise DisconnectedGraphError("static distribution problem needs a connected graph")
    B = incidence(graph).astype(float)

    if isinstance(cost, QuadraticCost):
        L = weighted_laplacian(graph, cost.weights)
        zeta = -(laplacian_pinv(L) @ supply)
        flow = (B.T @ zeta) / cost.weights
        return KktPoint(flow=flow, potential=zeta, supply=supply)

    n = graph.node_count
    # orthonormal basis of the hyperplane 1^T zeta = 0
    basis = np.linalg.svd(np.ones((1, n)))[2][1:].T
    y = np.zeros(n - 1)
    for _ in range(_NEWTON_MAX_ITER):
        zeta = basis @ y
        flow = cost.gradient_inverse(B.T @ zeta)
        residual = B @ flow + supply
        if np.abs(residual).max() <= 1e-12:
            return KktPoint(flow=flow, potential=zeta, supply=supply)
        slope = 1.0 / cost.hessian_diag(flow)
        jac = basis.T @ ((B * slope) @ B.T) @ basis
        step = np.linalg.solve(jac, basis.T @ residual)
        # damped update: backtrack until the residual norm decreases
        alpha = 1.0
        base = np.linalg.norm(residual)
        while alpha > 1e-8:
            trial = y - alpha * step
            trial_flow = cost.gradient_inverse(B.T @ (basis @ trial))
            if np.linalg.norm(B @ trial_flow + supply) < base:
                y = trial
                break
            alpha *= 0.5
        else:
            y = y - 1e-8 * step
    raise ConvergenceError("dual Newton did not converge within 200 iterations")


def kkt_residual(point, graph, cost):
    """Infinity norms of the stationarity and feasibility defects."""
    B = incidence(graph).astype(float)
    stationarity = np.abs(cost.gradient(point.flow) - B.T @ point.potential).max(initial=0.0)
    feasibility = np.abs(B @ point.flow + point.supply).max(initial=0.0)
    return float(stationarity), float(feasibility)


def gamma_distance(flow, w, graph, cost, supply_map):
    """Residual of membership in the optimal routing/supply set.

    Zero exactly when B lambda + P w = 0 and grad P(lambda) lies in
    range(B^T), i.e. its circulation projection vanishes.
    """
    flow = np.asarray(flow, dtype=float)
    w = np.asarray(w, dtype=float)
    B = incidence(graph).astype(float)
    supply = np.atleast_2d(np.asarray(supply_map, dtype=float)) @ w
    feasibility = np.linalg.norm(B @ flow + supply)
    circulation = np.linalg.norm(circulation_projector(graph) @ cost.gradient(flow))
    return float(feasibility + circulation)


def gamma_d_residual(potential, w, graph, cost, supply_map):
    """Residual of membership in the optimal dual set; invariant under potential shifts by 1."""
    potential = np.asarray(potential, dtype=float)
    w = np.asarray(w, dtype=float)
    B = incidence(graph).astype(float)
    supply = np.atleast_2d(np.asarray(supply_map, dtype=float)) @ w
    return float(np.linalg.norm(B @ cost.gradient_inverse(B.T @ potential) + supply))


def oracle_projected_gradient(graph, cost, supply, steps=100_000, rate=None):
    """Brute-force minimizer of the static problem by projected gradient descent.

    Starts from the least-squares feasible flow -B^+ supply and projects
    every gradient onto the circulation space, so all iterates stay
    feasible. With the default conservative step size the result agrees
    with ``solve_static`` to 1e-6. Iteration stops early once the
    projected gradient reaches the machine floor; a cost increase (a
    too-aggressive step size) raises ``OracleError``.
    """
    supply = _check_supply(graph, supply)
    B = incidence(graph).astype(float)
    flow = -np.linalg.lstsq(B, supply, rcond=None)[0]
    projector = circulation_projector(graph)

    value = cost.value(flow)
    if rate is None:
        if isinstance(cost, QuadraticCost):
            lipschitz = cost.weights.max()
        else:
            # gradient Lipschitz bound on the sublevel set of the start point
            bound = np.sqrt(2.0 * value / cost.quadratic.min()) if value > 0 else 0.0
            lipschitz = np.max(cost.quadratic + 3.0 * cost.quartic * bound**2)
        rate = 0.1 / lipschitz
    for _ in range(int(steps)):
        direction = projector @ cost.gradient(flow)
        if np.abs(direction).max(initial=0.0) < 1e-13:
            break
        flow = flow - rate * direction
        new_value = cost.value(flow)
        if new_value > value + 1e-12:
            raise OracleError(
                f"projected gradient diverged: cost rose from {value:.6g} to {new_value:.6g}")
        value = new_value
    return flow
