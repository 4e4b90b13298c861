"""Regulator (Sylvester) equations and feedforward gain construction.

For stacked linear node dynamics x' = A x + G u + P w, y = C x driven
by w' = S w, the steady motion on the agreement manifold is x = Pi w,
u = Gamma w with

    Pi S = A Pi + G Gamma + P,        (B (x) I_p)^T C Pi = 0.

``solve_sylvester`` solves the coupled pair by vectorization and then
extracts the minimum-norm flow map H with (B (x) I_p) H = Gamma, so the
generated edge flows coincide with the least-squares selection in the
circulation space. ``compute_H`` is the direct construction for
inventory networks through the weighted Laplacian pseudoinverse.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import DimensionError, RegulatorInfeasibleError, UnbalancedSupplyError
from .graph import incidence, incidence_lift, laplacian_pinv, weighted_laplacian

_RESIDUAL_TOL = 1e-9
_RANK_TOL = 1e-9
_MAX_STATE_DIM = 200


@dataclass(frozen=True, eq=False)
class RegulatorSolution:
    """Solution maps of the regulator equations and their residuals.

    ``flow_map`` is the minimum-norm H with (B (x) I_p) H = input_map;
    ``flow_residual`` reports how well that factorization holds (it is
    only exact when the input map lies in the cut space).
    """

    state_map: np.ndarray
    input_map: np.ndarray
    flow_map: np.ndarray
    sylvester_residual: float
    agreement_residual: float
    flow_residual: float


def regulator_residuals(A, G, C, P, S, graph, state_map, input_map, output_dim=1):
    """Infinity-norm residuals of both regulator equations for a candidate pair."""
    A, G, C, P, S = (np.atleast_2d(np.asarray(M, dtype=float)) for M in (A, G, C, P, S))
    Pi = np.atleast_2d(np.asarray(state_map, dtype=float))
    Gamma = np.atleast_2d(np.asarray(input_map, dtype=float))
    lift = incidence_lift(graph, output_dim)
    sylvester = np.abs(Pi @ S - A @ Pi - G @ Gamma - P).max(initial=0.0)
    agreement = np.abs(lift.T @ C @ Pi).max(initial=0.0)
    return float(sylvester), float(agreement)


def solve_sylvester(A, G, C, P, S, graph, output_dim=1):
    """Solve the regulator equations for (Pi, Gamma) and the flow map H.

    The coupled linear system is vectorized column-major and solved by
    least squares, which picks the minimum-norm pair when the equations
    are underdetermined. Raises ``RegulatorInfeasibleError`` (carrying
    the rank-feasibility diagnosis) when no exact solution exists.
    """
    A, G, C, P, S = (np.atleast_2d(np.asarray(M, dtype=float)) for M in (A, G, C, P, S))
    r = A.shape[0]
    q = S.shape[0]
    n_inputs = G.shape[1]
    if r > _MAX_STATE_DIM:
        raise DimensionError(f"state dimension {r} exceeds the supported cap {_MAX_STATE_DIM}")
    if P.shape != (r, q):
        raise DimensionError(f"P must have shape ({r}, {q}), got {P.shape}")

    lift = incidence_lift(graph, output_dim)
    bottom = lift.T @ C  # (m p) x r
    eye_q = np.eye(q)
    eye_r = np.eye(r)

    top = np.hstack([np.kron(S.T, eye_r) - np.kron(eye_q, A), -np.kron(eye_q, G)])
    agree = np.hstack([np.kron(eye_q, bottom),
                       np.zeros((q * bottom.shape[0], q * n_inputs))])
    system = np.vstack([top, agree])
    rhs = np.concatenate([P.flatten(order="F"), np.zeros(q * bottom.shape[0])])

    solution = np.linalg.lstsq(system, rhs, rcond=None)[0]
    Pi = solution[: r * q].reshape((r, q), order="F")
    Gamma = solution[r * q:].reshape((n_inputs, q), order="F")

    res_sylvester, res_agreement = regulator_residuals(
        A, G, C, P, S, graph, Pi, Gamma, output_dim)
    scale = max(1.0, np.abs(P).max(initial=0.0))
    if max(res_sylvester, res_agreement) > _RESIDUAL_TOL * scale:
        feasible, offending = rank_feasibility(A, G, C, S, graph, output_dim)
        raise RegulatorInfeasibleError(
            f"regulator equations have no solution (residual {res_sylvester:.3g}, "
            f"{res_agreement:.3g}); rank feasibility: {feasible}",
            feasible=feasible, offending_eigenvalues=offending)

    flow_map = np.linalg.pinv(lift) @ Gamma
    flow_residual = np.abs(lift @ flow_map - Gamma).max(initial=0.0)
    return RegulatorSolution(
        state_map=Pi,
        input_map=Gamma,
        flow_map=flow_map,
        sylvester_residual=res_sylvester,
        agreement_residual=res_agreement,
        flow_residual=float(flow_residual),
    )


def rank_feasibility(A, G, C, S, graph, output_dim=1):
    """Solvability test of the regulator equations for every disturbance map.

    For each eigenvalue mu of S the pencil

        [[A - mu I, G],
         [(B (x) I_p)^T C, 0]]

    is examined. The bottom rows carry a structural redundancy on cyclic
    graphs (circulations annihilate them) whose right-hand side is zero,
    so full row rank is the wrong test there. The equations are solvable
    for arbitrary P exactly when no left null vector touches the top
    rows, i.e. when rank(pencil) = r + rank(bottom rows). Returns the
    verdict and the list of offending eigenvalues.
    """
    A, G, C, S = (np.atleast_2d(np.asarray(M, dtype=float)) for M in (A, G, C, S))
    r = A.shape[0]
    lift = incidence_lift(graph, output_dim)
    bottom = np.hstack([lift.T @ C, np.zeros((lift.shape[1], G.shape[1]))])
    bottom_rank = _rank(bottom)

    offending = []
    for mu in np.linalg.eigvals(S):
        pencil = np.vstack([
            np.hstack([A - mu * np.eye(r), G]),
            bottom,
        ])
        if _rank(pencil) != r + bottom_rank:
            offending.append(complex(mu))
    return len(offending) == 0, offending


def _rank(matrix):
    singulars = np.linalg.svd(matrix, compute_uv=False)
    if singulars.size == 0 or singulars[0] == 0.0:
        return 0
    return int((singulars > _RANK_TOL * singulars[0]).sum())


@dataclass(frozen=True, eq=False)
class FeedforwardGains:
    """Dual (node) and flow (edge) forms of the steady-state feedforward map.

    ``dual`` is -L_Q^+ P (n x q) and ``flow`` is Q^{-1} B^T dual (m x q);
    the flow form satisfies B flow + P = 0 columnwise.
    """

    dual: np.ndarray
    flow: np.ndarray


def compute_H(graph, weights, supply_map):
    """Feedforward gains for an inventory network from the Laplacian pseudoinverse."""
    P = np.atleast_2d(np.asarray(supply_map, dtype=float))
    if P.shape[0] != graph.node_count:
        raise DimensionError(f"supply map must have {graph.node_count} rows")
    balance = np.abs(P.sum(axis=0)).max(initial=0.0)
    if balance > 1e-10 * max(1.0, np.abs(P).max(initial=0.0)):
        raise UnbalancedSupplyError(f"supply map not balanced: |1^T P| = {balance:.3g}")
    lap = weighted_laplacian(graph, weights)
    dual = -(laplacian_pinv(lap) @ P)
    flow = (incidence(graph).astype(float).T @ dual) / lap.weights[:, None]
    return FeedforwardGains(dual=dual, flow=flow)


def verify_steady_state(graph, flow_gain, S, supply_map, horizon=100.0, samples=101):
    """Worst-case routing identity residual along disturbance trajectories.

    Simulates w' = S w from every canonical initial condition (which by
    linearity covers all of them) and reports
    sup_t ||B H w(t) + P w(t)||_inf over the sampled horizon.
    """
    S = np.atleast_2d(np.asarray(S, dtype=float))
    P = np.atleast_2d(np.asarray(supply_map, dtype=float))
    H = np.atleast_2d(np.asarray(flow_gain, dtype=float))
    B = incidence(graph).astype(float)
    residual_map = B @ H + P
    worst = 0.0
    for t in np.linspace(0.0, horizon, samples):
        propagator = scipy.linalg.expm(S * t)
        worst = max(worst, np.abs(residual_map @ propagator).max(initial=0.0))
    return float(worst)
