import numpy as np
import pytest

from flowreg import exosystem as exo
from flowreg.errors import DimensionError, UnsupportedVariantError

ROTATION = np.array([[0.0, 1.0], [-1.0, 0.0]])


def test_drift_skew():
    spec = exo.linear_skew(ROTATION)
    assert np.allclose(exo.drift(spec, [1.0, 0.0]), [0.0, -1.0])


def test_drift_constant_is_zero():
    spec = exo.constant(3)
    assert np.array_equal(exo.drift(spec, [4.0, -1.0, 2.0]), np.zeros(3))


def test_drift_gradient_quadratic():
    # Sigma(w) = -||w||^2 / 2, so the drift is -w
    spec = exo.gradient_concave(np.eye(2))
    assert np.allclose(exo.drift(spec, [2.0, -1.0]), [-2.0, 1.0])


def test_drift_dimension_mismatch():
    spec = exo.linear_skew(ROTATION)
    with pytest.raises(DimensionError):
        exo.drift(spec, [1.0, 0.0, 0.0])


def test_validate_skew_ok():
    assert exo.validate(exo.linear_skew(ROTATION)) == []


def test_validate_skew_violation():
    spec = exo.ExosystemSpec(kind=exo.SKEW, state_dim=2, skew_matrix=np.eye(2))
    violations = exo.validate(spec)
    assert len(violations) == 1
    assert "skew" in violations[0]


def test_validate_concave_quadratic_ok():
    spec = exo.gradient_concave(np.array([[2.0, 0.5], [0.5, 1.0]]))
    assert exo.validate(spec) == []


def test_validate_nonconcave_detected():
    spec = exo.gradient_concave(-np.eye(2))  # drift +w is monotone increasing
    violations = exo.validate(spec)
    assert violations and "monotone" in violations[0]


def test_closed_form_rotation():
    spec = exo.linear_skew(ROTATION)
    w0 = np.array([1.0, 0.0])
    for t in (0.0, 0.3, 1.7, 12.0):
        # hand solution of w1' = w2, w2' = -w1 from (1, 0)
        expected = np.array([np.cos(t), -np.sin(t)])
        assert np.allclose(exo.closed_form(spec, w0, t), expected, atol=1e-12)


def test_closed_form_identity_at_zero():
    spec = exo.linear_skew(ROTATION)
    w0 = np.array([0.4, -2.0])
    assert np.allclose(exo.closed_form(spec, w0, 0.0), w0)


def test_closed_form_preserves_norm():
    rng = np.random.default_rng(3)
    raw = rng.normal(size=(3, 3))
    spec = exo.linear_skew(raw - raw.T)
    w0 = rng.normal(size=3)
    for t in (0.5, 5.0, 50.0):
        assert abs(np.linalg.norm(exo.closed_form(spec, w0, t)) - np.linalg.norm(w0)) < 1e-10


def test_closed_form_requires_skew_variant():
    with pytest.raises(UnsupportedVariantError):
        exo.closed_form(exo.constant(2), np.zeros(2), 1.0)


def _rk4(spec, w0, dt, steps):
    w = np.asarray(w0, dtype=float)
    for _ in range(steps):
        k1 = exo.drift(spec, w)
        k2 = exo.drift(spec, w + 0.5 * dt * k1)
        k3 = exo.drift(spec, w + 0.5 * dt * k2)
        k4 = exo.drift(spec, w + dt * k3)
        w = w + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return w


def test_skew_rk4_norm_drift_over_long_horizon():
    spec = exo.linear_skew(ROTATION)
    w0 = np.array([1.0, 0.0])
    w = _rk4(spec, w0, dt=1e-3, steps=100_000)
    assert abs(np.linalg.norm(w) - 1.0) <= 1e-6


def test_constant_trajectory_is_exact():
    spec = exo.constant(2)
    w0 = np.array([3.0, -1.0])
    assert np.array_equal(_rk4(spec, w0, 1e-2, 1000), w0)


def test_gradient_monotonicity_sampled():
    rng = np.random.default_rng(4)
    raw = rng.normal(size=(3, 3))
    curvature = raw @ raw.T + 0.1 * np.eye(3)
    spec = exo.gradient_concave(curvature)
    for _ in range(100):
        wa = exo.sample_initial(spec, rng)
        wb = exo.sample_initial(spec, rng)
        pairing = (wa - wb) @ (exo.drift(spec, wa) - exo.drift(spec, wb))
        assert pairing <= 1e-12


def test_sample_initial_respects_box():
    box = np.array([[0.0, 1.0], [-2.0, -1.0]])
    spec = exo.linear_skew(ROTATION, box=box)
    rng = np.random.default_rng(5)
    for _ in range(50):
        w = exo.sample_initial(spec, rng)
        assert np.all(w >= box[:, 0]) and np.all(w <= box[:, 1])
