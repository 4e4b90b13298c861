"""Distributed internal-model controllers for output agreement and optimal flow routing."""

from .controller import (
    BregmanEdgeController,
    DualNodeInternalModel,
    LinearEdgeInternalModel,
    edge_internal_model,
    inventory_routing,
)
from .exosystem import ExosystemSpec, constant, gradient_concave, linear_skew
from .graph import (
    Graph,
    WeightedLaplacian,
    complete_graph,
    incidence,
    incidence_lift,
    is_connected,
    laplacian_pinv,
    path_graph,
    project_circulation,
    ring_graph,
    weighted_laplacian,
)
from .optimizer import (
    KktPoint,
    QuadraticCost,
    QuarticCost,
    gamma_d_residual,
    gamma_distance,
    kkt_residual,
    oracle_projected_gradient,
    solve_static,
)
from .plant import (
    GradientNonlinearPlant,
    InventoryPlant,
    LinearPassivePlant,
    passivity_rate_check,
)
from .regulator import (
    FeedforwardGains,
    RegulatorSolution,
    compute_H,
    rank_feasibility,
    solve_sylvester,
    verify_steady_state,
)
from .sim import ClosedLoop, Trajectory, assemble, dissipation_check, run, step_rk4

__version__ = "0.1.0"
