"""Node dynamics with incremental storage certificates.

Three plant families are implemented, each with an incremental storage
function that certifies incremental passivity from the interconnection
input u to the output y:

* ``InventoryPlant``   -- pure integrators x' = u + P w, y = x. Lossless:
  the storage rate equals (y - y')^T (u - u') exactly.
* ``LinearPassivePlant`` -- per-node linear blocks x_i' = A_i x_i + G_i u_i
  + P_i w with y_i = C_i x_i, certified by user-supplied Q_i > 0 with
  A_i^T Q_i + Q_i A_i <= 0 and Q_i G_i = C_i^T.
* ``GradientNonlinearPlant`` -- per-node x_i' = grad F_i(x_i) + G_i u_i
  + P_i w with F_i concave and G_i = C_i^T.

Disturbance maps P_i take the full exosystem state (q columns), so nodes
may share or ignore disturbance coordinates as the scenario chooses.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError

_PASSIVITY_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class InventoryPlant:
    """Storage-level integrators x' = u + P w with identity output."""

    supply_map: np.ndarray

    def __post_init__(self):
        P = np.atleast_2d(np.asarray(self.supply_map, dtype=float))
        object.__setattr__(self, "supply_map", P)

    @property
    def node_count(self):
        return self.supply_map.shape[0]

    @property
    def state_dim(self):
        return self.supply_map.shape[0]

    @property
    def output_dim(self):
        return 1

    @property
    def disturbance_dim(self):
        return self.supply_map.shape[1]

    def dynamics(self, x, u, w):
        _check_dims(self, x, u, w)
        return u + self.supply_map @ w

    def output(self, x, w):
        return np.asarray(x, dtype=float)

    def storage(self, x, x_ref):
        d = np.asarray(x, dtype=float) - np.asarray(x_ref, dtype=float)
        return 0.5 * float(d @ d)

    def storage_gradient(self, x, x_ref):
        return np.asarray(x, dtype=float) - np.asarray(x_ref, dtype=float)

    def validate(self):
        col = np.abs(self.supply_map.sum(axis=0)).max(initial=0.0)
        if col > 1e-10:
            return [f"supply not balanced: |1^T P| = {col:.3g}"]
        return []


@dataclass(frozen=True, eq=False)
class LinearNode:
    """One linear node block together with its passivity certificate Q."""

    A: np.ndarray
    G: np.ndarray
    P: np.ndarray
    C: np.ndarray
    Q: np.ndarray

    def __post_init__(self):
        for name in ("A", "G", "P", "C", "Q"):
            object.__setattr__(self, name, np.atleast_2d(np.asarray(getattr(self, name), dtype=float)))
        r = self.A.shape[0]
        if self.A.shape != (r, r) or self.Q.shape != (r, r):
            raise DimensionError("A and Q must be square with matching size")
        if self.G.shape[0] != r or self.P.shape[0] != r or self.C.shape[1] != r:
            raise DimensionError("G, P rows and C columns must match the state size")
        if self.G.shape[1] != self.C.shape[0]:
            raise DimensionError("G columns must match C rows (input and output dims)")


@dataclass(frozen=True, eq=False)
class GradientNonlinearNode:
    """One gradient node: drift is the gradient of a concave potential, G = C^T."""

    drift: object
    C: np.ndarray
    P: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "C", np.atleast_2d(np.asarray(self.C, dtype=float)))
        object.__setattr__(self, "P", np.atleast_2d(np.asarray(self.P, dtype=float)))
        if self.P.shape[0] != self.C.shape[1]:
            raise DimensionError("P rows must match the node state size (C columns)")

    @property
    def G(self):
        return self.C.T


class _BlockPlant:
    """Shared slicing helpers for per-node block plants."""

    @property
    def node_count(self):
        return len(self.nodes)

    @property
    def state_dims(self):
        return tuple(node.C.shape[1] for node in self.nodes)

    @property
    def state_dim(self):
        return sum(self.state_dims)

    @property
    def output_dim(self):
        return self.nodes[0].C.shape[0]

    @property
    def disturbance_dim(self):
        return self.nodes[0].P.shape[1]

    def _state_slices(self):
        offsets = np.cumsum((0,) + self.state_dims)
        return [slice(offsets[i], offsets[i + 1]) for i in range(self.node_count)]

    def _io_slices(self):
        p = self.output_dim
        return [slice(i * p, (i + 1) * p) for i in range(self.node_count)]

    def output(self, x, w):
        x = np.asarray(x, dtype=float)
        return np.concatenate(
            [node.C @ x[sl] for node, sl in zip(self.nodes, self._state_slices())])


@dataclass(frozen=True, eq=False)
class LinearPassivePlant(_BlockPlant):
    nodes: tuple[LinearNode, ...]

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        p = self.nodes[0].C.shape[0]
        q = self.nodes[0].P.shape[1]
        for node in self.nodes:
            if node.C.shape[0] != p:
                raise DimensionError("all nodes must share one output dimension")
            if node.P.shape[1] != q:
                raise DimensionError("all nodes must share the disturbance dimension")

    def dynamics(self, x, u, w):
        _check_dims(self, x, u, w)
        parts = []
        for node, sx, su in zip(self.nodes, self._state_slices(), self._io_slices()):
            parts.append(node.A @ x[sx] + node.G @ u[su] + node.P @ w)
        return np.concatenate(parts)

    def storage(self, x, x_ref):
        d = np.asarray(x, dtype=float) - np.asarray(x_ref, dtype=float)
        total = 0.0
        for node, sl in zip(self.nodes, self._state_slices()):
            total += 0.5 * float(d[sl] @ node.Q @ d[sl])
        return total

    def storage_gradient(self, x, x_ref):
        d = np.asarray(x, dtype=float) - np.asarray(x_ref, dtype=float)
        return np.concatenate(
            [node.Q @ d[sl] for node, sl in zip(self.nodes, self._state_slices())])

    def validate(self):
        violations = []
        for i, node in enumerate(self.nodes):
            if np.abs(node.Q - node.Q.T).max() > 1e-12:
                violations.append(f"node {i}: Q is not symmetric")
                continue
            if np.linalg.eigvalsh(node.Q).min() <= 0:
                violations.append(f"node {i}: Q is not positive definite")
            lyap = node.A.T @ node.Q + node.Q @ node.A
            top = np.linalg.eigvalsh(0.5 * (lyap + lyap.T)).max()
            if top > _PASSIVITY_TOL:
                violations.append(
                    f"node {i}: A^T Q + Q A has positive eigenvalue {top:.3g}")
            mismatch = np.abs(node.Q @ node.G - node.C.T).max(initial=0.0)
            if mismatch > 1e-10:
                violations.append(f"node {i}: Q G != C^T (defect {mismatch:.3g})")
        return violations


@dataclass(frozen=True, eq=False)
class GradientNonlinearPlant(_BlockPlant):
    nodes: tuple[GradientNonlinearNode, ...]

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        p = self.nodes[0].C.shape[0]
        q = self.nodes[0].P.shape[1]
        for node in self.nodes:
            if node.C.shape[0] != p or node.P.shape[1] != q:
                raise DimensionError("all nodes must share output and disturbance dims")

    def dynamics(self, x, u, w):
        _check_dims(self, x, u, w)
        parts = []
        for node, sx, su in zip(self.nodes, self._state_slices(), self._io_slices()):
            parts.append(node.drift(x[sx]) + node.G @ u[su] + node.P @ w)
        return np.concatenate(parts)

    def storage(self, x, x_ref):
        d = np.asarray(x, dtype=float) - np.asarray(x_ref, dtype=float)
        return 0.5 * float(d @ d)

    def storage_gradient(self, x, x_ref):
        return np.asarray(x, dtype=float) - np.asarray(x_ref, dtype=float)

    def validate(self, sample_pairs=100, seed=0):
        violations = []
        rng = np.random.default_rng(seed)
        for i, node in enumerate(self.nodes):
            r = node.C.shape[1]
            worst = 0.0
            for _ in range(sample_pairs):
                xa = rng.uniform(-2.0, 2.0, size=r)
                xb = rng.uniform(-2.0, 2.0, size=r)
                worst = max(worst, float((xa - xb) @ (node.drift(xa) - node.drift(xb))))
            if worst > 1e-12:
                violations.append(
                    f"node {i}: drift is not the gradient of a concave potential "
                    f"(worst pairing {worst:.3g})")
        return violations


# Built-in concave-gradient drifts for the nonlinear plant. Keeping these as
# named objects (rather than arbitrary callables) keeps scenario files
# declarative and the concavity check meaningful.

@dataclass(frozen=True, eq=False)
class ConcaveQuadraticDrift:
    """grad of -x^T M x / 2 for positive semidefinite M."""

    curvature: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "curvature", np.atleast_2d(np.asarray(self.curvature, dtype=float)))

    def __call__(self, x):
        return -(self.curvature @ x)


@dataclass(frozen=True)
class CubicDrift:
    """grad of -x^4/4 componentwise: -x^3."""

    def __call__(self, x):
        return -np.asarray(x, dtype=float) ** 3


@dataclass(frozen=True)
class TanhDrift:
    """grad of -a log cosh(x) componentwise: -a tanh(x)."""

    scale: float = 1.0

    def __call__(self, x):
        return -self.scale * np.tanh(np.asarray(x, dtype=float))


def stacked_matrices(plant):
    """Stacked (A, G, C, P) of a linear plant, as consumed by the regulator module.

    Inventory plants are the integrator special case A = 0, G = C = I.
    Returns None for plants without a linear stacked form.
    """
    import scipy.linalg

    if isinstance(plant, InventoryPlant):
        n = plant.node_count
        return np.zeros((n, n)), np.eye(n), np.eye(n), plant.supply_map
    if isinstance(plant, LinearPassivePlant):
        A = scipy.linalg.block_diag(*[node.A for node in plant.nodes])
        G = scipy.linalg.block_diag(*[node.G for node in plant.nodes])
        C = scipy.linalg.block_diag(*[node.C for node in plant.nodes])
        P = np.vstack([node.P for node in plant.nodes])
        return A, G, C, P
    return None


def passivity_rate_check(plant, x, x_ref, u, u_ref, w):
    """Residual of the incremental dissipation inequality along two trajectories.

    Evaluates dV/dt - (y - y')^T (u - u') analytically, where V is the
    plant's incremental storage and both trajectories see the same
    disturbance w. The contract is residual <= 0 (up to 1e-10) for every
    valid plant; the integrator variant is lossless so its residual is
    exactly zero.
    """
    x = np.asarray(x, dtype=float)
    x_ref = np.asarray(x_ref, dtype=float)
    u = np.asarray(u, dtype=float)
    u_ref = np.asarray(u_ref, dtype=float)
    grad = plant.storage_gradient(x, x_ref)
    rate = float(grad @ (plant.dynamics(x, u, w) - plant.dynamics(x_ref, u_ref, w)))
    dy = plant.output(x, w) - plant.output(x_ref, w)
    return rate - float(dy @ (u - u_ref))


def _check_dims(plant, x, u, w):
    x = np.asarray(x)
    u = np.asarray(u)
    w = np.asarray(w)
    if x.shape != (plant.state_dim,):
        raise DimensionError(f"state must have shape ({plant.state_dim},), got {x.shape}")
    expected_u = plant.node_count * plant.output_dim
    if u.shape != (expected_u,):
        raise DimensionError(f"input must have shape ({expected_u},), got {u.shape}")
    if w.shape != (plant.disturbance_dim,):
        raise DimensionError(
            f"disturbance must have shape ({plant.disturbance_dim},), got {w.shape}")
