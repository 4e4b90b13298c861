"""Edge and node controllers built around internal models.

All controllers share one shape: an internal-model state that can
replay the steady-state flow with zero forcing, an additive input that
steers toward the agreement manifold, and an output with the stabilizing
feedthrough term nu. The interconnection supplies v = nu = -z, where z
is the stacked vector of relative plant outputs.

Four families are provided:

* ``LinearEdgeInternalModel`` -- one copy of a linear internal model per
  edge k, with dynamics eta_k' = S eta_k + M_k^T v_k and internal output
  M_k eta_k. Incrementally passive whenever S + S^T <= 0; storage is
  (1/2) ||eta - eta'||^2. ``inventory_routing`` builds the same
  controller from a flow feedforward matrix H (M = H), which achieves
  exact routing of a time-varying balanced supply.
* ``DualNodeInternalModel`` -- internal models on the nodes generating
  the optimal dual potentials for quadratic flow costs; the flow output
  is Q^{-1} B^T applied to the generated potentials.
* ``BregmanEdgeController`` -- integrator state per edge for constant
  supplies, output grad_inv(P)(sigma) + nu, with the Bregman distance of
  the cost conjugate as storage. In ``dual-sigma`` mode the state is the
  edge potential difference B^T zeta and the input must stay in
  range(B^T); ``edge-potential`` mode drops that contract.
"""

from dataclasses import dataclass

import numpy as np

from .errors import (
    DimensionError,
    InterconnectionContractError,
    RequiresOptimizerError,
)
from .graph import incidence, project_circulation
from .optimizer import solve_static

DUAL_SIGMA = "dual-sigma"
EDGE_POTENTIAL = "edge-potential"

_RANGE_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class LinearEdgeInternalModel:
    """Identical linear internal models on every edge.

    ``output_rows`` stacks the per-edge output maps: rows p*k .. p*(k+1)
    form M_k, so the internal output on edge k is M_k eta_k and the
    input enters the edge state through M_k^T.
    """

    internal_matrix: np.ndarray
    output_rows: np.ndarray
    edge_count: int
    output_dim: int = 1

    def __post_init__(self):
        S = np.atleast_2d(np.asarray(self.internal_matrix, dtype=float))
        M = np.atleast_2d(np.asarray(self.output_rows, dtype=float))
        object.__setattr__(self, "internal_matrix", S)
        object.__setattr__(self, "output_rows", M)
        if S.shape[0] != S.shape[1]:
            raise DimensionError("internal model matrix must be square")
        if M.shape != (self.edge_count * self.output_dim, S.shape[0]):
            raise DimensionError(
                f"output rows must have shape ({self.edge_count * self.output_dim}, "
                f"{S.shape[0]}), got {M.shape}")

    @property
    def model_dim(self):
        return self.internal_matrix.shape[0]

    @property
    def state_dim(self):
        return self.edge_count * self.model_dim

    @property
    def input_dim(self):
        return self.edge_count * self.output_dim

    def _blocks(self, state):
        return np.asarray(state, dtype=float).reshape(self.edge_count, self.model_dim)

    def _row_blocks(self):
        return self.output_rows.reshape(self.edge_count, self.output_dim, self.model_dim)

    def dynamics(self, state, v):
        v = _check_input(self, v)
        etas = self._blocks(state)
        forced = np.einsum("kpq,kp->kq", self._row_blocks(), v.reshape(self.edge_count, -1))
        return (etas @ self.internal_matrix.T + forced).ravel()

    def internal_output(self, state):
        """Stacked internal-model outputs M_k eta_k (no feedthrough)."""
        etas = self._blocks(state)
        return np.einsum("kpq,kq->kp", self._row_blocks(), etas).ravel()

    def output(self, state, v):
        """Flow output including the stabilizing feedthrough: psi(eta) + nu with nu = v."""
        v = _check_input(self, v)
        return self.internal_output(state) + v

    def storage(self, state, ref_state):
        d = np.asarray(state, dtype=float) - np.asarray(ref_state, dtype=float)
        return 0.5 * float(d @ d)

    def init_matched(self, w0, supply=None):
        """State replaying the steady flow under zero input: every edge holds w0."""
        w0 = np.asarray(w0, dtype=float)
        if w0.shape != (self.model_dim,):
            raise DimensionError(f"w0 must have shape ({self.model_dim},)")
        return np.tile(w0, self.edge_count)

    def passivity_residual(self, state, ref_state, v, v_ref):
        """dW/dt - (psi(eta) - psi(eta'))^T (v - v') for two forced trajectories.

        Nonpositive whenever the internal matrix satisfies S + S^T <= 0;
        exactly zero for skew-symmetric S.
        """
        d = np.asarray(state, dtype=float) - np.asarray(ref_state, dtype=float)
        rate = float(d @ (self.dynamics(state, v) - self.dynamics(ref_state, v_ref)))
        dout = self.internal_output(state) - self.internal_output(ref_state)
        return rate - float(dout @ (np.asarray(v) - np.asarray(v_ref)))

    def validate(self):
        defect = np.abs(self.internal_matrix + self.internal_matrix.T).max(initial=0.0)
        if defect > 1e-12:
            return [f"internal model matrix is not skew-symmetric (defect {defect:.3g})"]
        return []


def edge_internal_model(internal_matrix, output_rows, edge_count=None, output_dim=1):
    """Edge internal models with an explicit stacked output map."""
    M = np.atleast_2d(np.asarray(output_rows, dtype=float))
    if edge_count is None:
        edge_count = M.shape[0] // output_dim
    return LinearEdgeInternalModel(
        internal_matrix=internal_matrix,
        output_rows=M,
        edge_count=edge_count,
        output_dim=output_dim,
    )


def inventory_routing(internal_matrix, flow_gain):
    """Routing controller for inventory networks: edge k uses row k of the flow map H."""
    H = np.atleast_2d(np.asarray(flow_gain, dtype=float))
    return LinearEdgeInternalModel(
        internal_matrix=internal_matrix,
        output_rows=H,
        edge_count=H.shape[0],
        output_dim=1,
    )


@dataclass(frozen=True, eq=False)
class DualNodeInternalModel:
    """Internal models on the nodes generating optimal dual potentials.

    Node i runs eta_i' = S eta_i driven through row i of the dual gain
    H (n x q); the generated potential is zeta_i = H_i^T eta_i and the
    flow output is lambda = Q^{-1} B^T zeta + nu for the diagonal edge
    weights Q of the quadratic cost.
    """

    internal_matrix: np.ndarray
    dual_rows: np.ndarray
    edge_weights: np.ndarray
    graph: object

    def __post_init__(self):
        S = np.atleast_2d(np.asarray(self.internal_matrix, dtype=float))
        H = np.atleast_2d(np.asarray(self.dual_rows, dtype=float))
        q = np.asarray(self.edge_weights, dtype=float)
        object.__setattr__(self, "internal_matrix", S)
        object.__setattr__(self, "dual_rows", H)
        object.__setattr__(self, "edge_weights", q)
        if H.shape != (self.graph.node_count, S.shape[0]):
            raise DimensionError(
                f"dual rows must have shape ({self.graph.node_count}, {S.shape[0]})")
        if q.shape != (self.graph.edge_count,) or np.any(q <= 0):
            raise DimensionError("edge weights must be positive, one per edge")
        object.__setattr__(self, "_incidence", incidence(self.graph).astype(float))

    @property
    def model_dim(self):
        return self.internal_matrix.shape[0]

    @property
    def output_dim(self):
        return 1

    @property
    def state_dim(self):
        return self.graph.node_count * self.model_dim

    @property
    def input_dim(self):
        return self.graph.edge_count

    def _blocks(self, state):
        return np.asarray(state, dtype=float).reshape(self.graph.node_count, self.model_dim)

    def potentials(self, state):
        """Generated dual potentials zeta_i = H_i^T eta_i."""
        return np.einsum("iq,iq->i", self.dual_rows, self._blocks(state))

    def dynamics(self, state, v):
        v = _check_input(self, v)
        etas = self._blocks(state)
        node_drive = self._incidence @ (v / self.edge_weights)
        return (etas @ self.internal_matrix.T + self.dual_rows * node_drive[:, None]).ravel()

    def internal_output(self, state):
        return (self._incidence.T @ self.potentials(state)) / self.edge_weights

    def output(self, state, v):
        v = _check_input(self, v)
        return self.internal_output(state) + v

    def storage(self, state, ref_state):
        d = np.asarray(state, dtype=float) - np.asarray(ref_state, dtype=float)
        return 0.5 * float(d @ d)

    def init_matched(self, w0, supply=None):
        w0 = np.asarray(w0, dtype=float)
        if w0.shape != (self.model_dim,):
            raise DimensionError(f"w0 must have shape ({self.model_dim},)")
        return np.tile(w0, self.graph.node_count)

    def passivity_residual(self, state, ref_state, v, v_ref):
        d = np.asarray(state, dtype=float) - np.asarray(ref_state, dtype=float)
        rate = float(d @ (self.dynamics(state, v) - self.dynamics(ref_state, v_ref)))
        dout = self.internal_output(state) - self.internal_output(ref_state)
        return rate - float(dout @ (np.asarray(v) - np.asarray(v_ref)))

    def validate(self):
        defect = np.abs(self.internal_matrix + self.internal_matrix.T).max(initial=0.0)
        if defect > 1e-12:
            return [f"internal model matrix is not skew-symmetric (defect {defect:.3g})"]
        return []


@dataclass(frozen=True, eq=False)
class BregmanEdgeController:
    """Integrator edge controller for constant supplies with general convex costs.

    State sigma in R^m with sigma' = nu and output grad_inv(P)(sigma) + nu.
    The incremental storage is the Bregman distance of the convex
    conjugate P* between sigma and a steady reference, which certifies
    passivity against the constant steady input. In ``dual-sigma`` mode
    sigma tracks B^T zeta, so inputs (and the initial state) must lie in
    range(B^T); that containment is preserved along trajectories.
    """

    cost: object
    graph: object
    mode: str = DUAL_SIGMA

    def __post_init__(self):
        if self.mode not in (DUAL_SIGMA, EDGE_POTENTIAL):
            raise ValueError(f"unknown Bregman controller mode {self.mode!r}")
        if self.cost.edge_count != self.graph.edge_count:
            raise DimensionError("cost must have one component per graph edge")

    @property
    def output_dim(self):
        return 1

    @property
    def state_dim(self):
        return self.graph.edge_count

    @property
    def input_dim(self):
        return self.graph.edge_count

    def dynamics(self, state, v):
        v = _check_input(self, v)
        if self.mode == DUAL_SIGMA:
            drift = project_circulation(self.graph, v)
            if np.abs(drift).max(initial=0.0) > _RANGE_TOL * max(1.0, np.abs(v).max()):
                raise InterconnectionContractError(
                    "dual-sigma input has a circulation component "
                    f"of size {np.abs(drift).max():.3g}; it must lie in range(B^T)")
        return v.copy()

    def internal_output(self, state):
        return self.cost.gradient_inverse(np.asarray(state, dtype=float))

    def output(self, state, v):
        v = _check_input(self, v)
        return self.internal_output(state) + v

    def storage(self, state, ref_state):
        """Bregman distance of the cost conjugate between state and reference."""
        state = np.asarray(state, dtype=float)
        ref_state = np.asarray(ref_state, dtype=float)
        ref_slope = self.cost.gradient_inverse(ref_state)
        return (self.cost.conjugate(state) - self.cost.conjugate(ref_state)
                - float(ref_slope @ (state - ref_state)))

    def init_matched(self, w0, supply=None):
        """Steady state sigma = B^T zeta for the optimal dual zeta of the given supply."""
        if supply is None:
            raise RequiresOptimizerError(
                "matched initialization needs the constant supply vector to "
                "solve the static distribution problem")
        point = solve_static(self.graph, self.cost, supply)
        return incidence(self.graph).astype(float).T @ point.potential

    def passivity_residual(self, state, ref_state, v, v_ref):
        """dW/dt - (psi - psi_ref)^T (v - v_ref); nonpositive only for steady references.

        The Bregman storage certifies passivity against constant inputs,
        so the contract residual <= 0 applies when v_ref = 0 (then it is
        exactly zero).
        """
        state = np.asarray(state, dtype=float)
        ref_state = np.asarray(ref_state, dtype=float)
        out = self.internal_output(state)
        out_ref = self.internal_output(ref_state)
        # partial derivatives of the Bregman distance in both arguments
        ref_curvature = 1.0 / self.cost.hessian_diag(out_ref)
        rate = float((out - out_ref) @ np.asarray(v, dtype=float))
        rate -= float(((state - ref_state) * ref_curvature) @ np.asarray(v_ref, dtype=float))
        return rate - float((out - out_ref) @ (np.asarray(v) - np.asarray(v_ref)))

    def validate(self):
        return []


def _check_input(controller, v):
    v = np.asarray(v, dtype=float)
    if v.shape != (controller.input_dim,):
        raise DimensionError(
            f"controller input must have shape ({controller.input_dim},), got {v.shape}")
    return v
