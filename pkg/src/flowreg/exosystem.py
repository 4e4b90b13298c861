"""Disturbance generators w' = s(w).

Three variants are supported: linear drift with a skew-symmetric matrix,
the gradient of a concave quadratic, and the constant (zero drift) case.
All drifts are incrementally monotone decreasing, which is what the
internal-model controllers rely on.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import DimensionError, UnsupportedVariantError

SKEW = "skew"
GRADIENT = "gradient"
CONSTANT = "constant"

_SKEW_TOL = 1e-12
_MONOTONE_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class ExosystemSpec:
    """Immutable description of a disturbance generator.

    ``box`` is the compact set of admissible initial conditions, one
    (low, high) row per coordinate. Initial conditions drawn from it use
    a caller-supplied seeded generator so runs stay reproducible.
    """

    kind: str
    state_dim: int
    skew_matrix: np.ndarray | None = None
    curvature: np.ndarray | None = None
    box: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in (SKEW, GRADIENT, CONSTANT):
            raise UnsupportedVariantError(f"unknown exosystem kind {self.kind!r}")
        box = self.box
        if box is None:
            box = np.column_stack([-np.ones(self.state_dim), np.ones(self.state_dim)])
        box = np.asarray(box, dtype=float)
        if box.shape != (self.state_dim, 2):
            raise DimensionError(f"box must have shape ({self.state_dim}, 2)")
        object.__setattr__(self, "box", box)


def linear_skew(matrix, box=None):
    """Exosystem w' = S w for a skew-symmetric S."""
    S = np.asarray(matrix, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise DimensionError("skew drift matrix must be square")
    return ExosystemSpec(kind=SKEW, state_dim=S.shape[0], skew_matrix=S, box=box)


def gradient_concave(curvature, box=None):
    """Exosystem w' = -M w, the gradient of the concave quadratic -w^T M w / 2."""
    M = np.asarray(curvature, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DimensionError("curvature matrix must be square")
    return ExosystemSpec(kind=GRADIENT, state_dim=M.shape[0], curvature=M, box=box)


def constant(state_dim, box=None):
    """Exosystem with zero drift; w stays at its initial value."""
    return ExosystemSpec(kind=CONSTANT, state_dim=int(state_dim), box=box)


def drift(spec, w):
    """Evaluate s(w) for the given spec."""
    w = np.asarray(w, dtype=float)
    if w.shape != (spec.state_dim,):
        raise DimensionError(
            f"disturbance state must have shape ({spec.state_dim},), got {w.shape}")
    if spec.kind == SKEW:
        return spec.skew_matrix @ w
    if spec.kind == GRADIENT:
        return -(spec.curvature @ w)
    return np.zeros_like(w)


def validate(spec, sample_pairs=100, seed=0):
    """Check structural invariants; returns a list of violation messages.

    Skew variants must satisfy S + S^T = 0 to 1e-12. Gradient variants are
    checked for incremental monotonicity, (w - w')^T (s(w) - s(w')) <= 0,
    on ``sample_pairs`` random pairs drawn from the initial-condition box.
    """
    violations = []
    if spec.kind == SKEW:
        defect = np.abs(spec.skew_matrix + spec.skew_matrix.T).max()
        if defect > _SKEW_TOL:
            violations.append(f"drift matrix is not skew-symmetric (|S + S^T| = {defect:.3g})")
    elif spec.kind == GRADIENT:
        rng = np.random.default_rng(seed)
        lo, hi = spec.box[:, 0], spec.box[:, 1]
        worst = 0.0
        for _ in range(sample_pairs):
            wa = rng.uniform(lo, hi)
            wb = rng.uniform(lo, hi)
            worst = max(worst, float((wa - wb) @ (drift(spec, wa) - drift(spec, wb))))
        if worst > _MONOTONE_TOL:
            violations.append(
                f"gradient drift is not incrementally monotone (worst pairing {worst:.3g})")
    return violations


def closed_form(spec, w0, t):
    """Exact solution exp(S t) w0 of the skew variant; reference for integrator tests."""
    if spec.kind != SKEW:
        raise UnsupportedVariantError("closed_form is only defined for the skew variant")
    w0 = np.asarray(w0, dtype=float)
    if w0.shape != (spec.state_dim,):
        raise DimensionError(f"w0 must have shape ({spec.state_dim},)")
    return scipy.linalg.expm(spec.skew_matrix * float(t)) @ w0


def sample_initial(spec, rng):
    """Draw an initial condition uniformly from the spec's box."""
    return rng.uniform(spec.box[:, 0], spec.box[:, 1])
