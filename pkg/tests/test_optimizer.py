import numpy as np
import pytest

from flowreg.errors import OracleError, UnbalancedSupplyError
from flowreg.graph import Graph, incidence, path_graph, ring_graph
from flowreg.optimizer import (
    QuadraticCost,
    QuarticCost,
    gamma_d_residual,
    gamma_distance,
    kkt_residual,
    oracle_projected_gradient,
    solve_static,
)
from tests.test_graph import random_connected_graph

RING = ring_graph(3)
RING_SUPPLY = np.array([1.0, -1.0, 0.0])
# by hand: lambda_2 = lambda_3, lambda_1 = lambda_3 - 1, minimize
# (lambda_3 - 1)^2/2 + lambda_3^2 gives lambda_3 = 1/3
RING_OPTIMUM = np.array([-2.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0])


def test_cost_gradient_inverse_roundtrip():
    rng = np.random.default_rng(12)
    quad = QuadraticCost(rng.uniform(0.5, 3.0, size=5))
    quart = QuarticCost(rng.uniform(0.0, 2.0, size=5), rng.uniform(0.5, 2.0, size=5))
    for cost in (quad, quart):
        for _ in range(20):
            lam = rng.uniform(-4.0, 4.0, size=5)
            back = cost.gradient_inverse(cost.gradient(lam))
            assert np.abs(back - lam).max() <= 1e-10


def test_quadratic_conjugate_value():
    cost = QuadraticCost(np.array([2.0]))
    # conjugate of q x^2 / 2 is s^2 / (2q)
    assert cost.conjugate(np.array([4.0])) == pytest.approx(4.0)


def test_quartic_conjugate_fenchel_inequality():
    rng = np.random.default_rng(13)
    cost = QuarticCost(np.array([1.0, 0.5]), np.array([1.0, 2.0]))
    for _ in range(50):
        lam = rng.uniform(-3.0, 3.0, size=2)
        sigma = rng.uniform(-3.0, 3.0, size=2)
        # Fenchel-Young: P(lam) + P*(sigma) >= sigma . lam, equality at sigma = grad P
        assert cost.value(lam) + cost.conjugate(sigma) >= float(sigma @ lam) - 1e-10
        tight = cost.gradient(lam)
        assert cost.value(lam) + cost.conjugate(tight) == pytest.approx(
            float(tight @ lam), abs=1e-9)


def test_solve_static_two_node_forced_flow():
    g = Graph(2, ((0, 1),))
    supply = np.array([1.0, -1.0])
    for cost in (QuadraticCost(np.array([3.0])),
                 QuarticCost(np.array([2.0]), np.array([0.7]))):
        point = solve_static(g, cost, supply)
        assert np.allclose(point.flow, [-1.0], atol=1e-10)


def test_solve_static_ring_hand_value():
    point = solve_static(RING, QuadraticCost(np.ones(3)), RING_SUPPLY)
    assert np.allclose(point.flow, RING_OPTIMUM, atol=1e-10)
    stat, feas = kkt_residual(point, RING, QuadraticCost(np.ones(3)))
    assert stat <= 1e-10 and feas <= 1e-10


def test_solve_static_zero_supply():
    point = solve_static(RING, QuadraticCost(np.ones(3)), np.zeros(3))
    assert np.allclose(point.flow, 0.0, atol=1e-12)
    assert np.allclose(point.potential, 0.0, atol=1e-12)


def test_solve_static_rejects_unbalanced():
    with pytest.raises(UnbalancedSupplyError):
        solve_static(RING, QuadraticCost(np.ones(3)), np.array([1.0, 0.0, 0.0]))


def test_solve_static_quartic_ring():
    cost = QuarticCost(np.array([0.5, 1.0, 1.5]), np.array([1.0, 0.8, 1.2]))
    point = solve_static(RING, cost, RING_SUPPLY)
    stat, feas = kkt_residual(point, RING, cost)
    assert stat <= 1e-10 and feas <= 1e-10


def test_kkt_residual_examples():
    cost = QuadraticCost(np.ones(1))
    g = Graph(2, ((0, 1),))
    from flowreg.optimizer import KktPoint
    point = KktPoint(flow=np.array([-1.0]), potential=np.array([-0.5, 0.5]),
                     supply=np.array([1.0, -1.0]))
    stat, feas = kkt_residual(point, g, cost)
    assert stat == pytest.approx(0.0, abs=1e-14)
    assert feas == pytest.approx(0.0, abs=1e-14)

    zero = KktPoint(flow=np.zeros(3), potential=np.zeros(3), supply=RING_SUPPLY)
    _, feas = kkt_residual(zero, RING, QuadraticCost(np.ones(3)))
    assert feas == pytest.approx(1.0)


def test_gamma_distance_at_optimum_and_cycle_shift():
    cost = QuadraticCost(np.ones(3))
    P = RING_SUPPLY.reshape(3, 1)
    w = np.array([1.0])
    point = solve_static(RING, cost, RING_SUPPLY)
    assert gamma_distance(point.flow, w, RING, cost, P) <= 1e-9
    for c in (0.5, -2.0):
        shifted = point.flow + c * np.ones(3)
        assert gamma_distance(shifted, w, RING, cost, P) == pytest.approx(
            abs(c) * np.sqrt(3.0), abs=1e-9)


def test_gamma_distance_tree_has_no_circulation_term():
    g = path_graph(3)
    cost = QuadraticCost(np.ones(2))
    P = np.array([[1.0], [0.0], [-1.0]])
    w = np.array([1.0])
    feasible = np.array([-1.0, -1.0])  # the unique feasible flow
    assert np.allclose(incidence(g) @ feasible + P @ w, 0.0)
    assert gamma_distance(feasible, w, g, cost, P) <= 1e-12


def test_gamma_d_shift_invariance():
    cost = QuadraticCost(np.array([1.0, 2.0, 3.0]))
    P = RING_SUPPLY.reshape(3, 1)
    w = np.array([1.0])
    point = solve_static(RING, cost, RING_SUPPLY)
    assert gamma_d_residual(point.potential, w, RING, cost, P) <= 1e-10
    base = gamma_d_residual(point.potential + 2.3, w, RING, cost, P)
    assert base <= 1e-10
    rng = np.random.default_rng(14)
    for _ in range(10):
        zeta = rng.normal(size=3)
        r0 = gamma_d_residual(zeta, w, RING, cost, P)
        r1 = gamma_d_residual(zeta + 5.0, w, RING, cost, P)
        assert abs(r0 - r1) <= 1e-12
    assert gamma_d_residual(np.zeros(3), w, RING, cost, P) == pytest.approx(
        np.linalg.norm(RING_SUPPLY))


def test_oracle_ring_matches_hand_value():
    flow = oracle_projected_gradient(RING, QuadraticCost(np.ones(3)), RING_SUPPLY)
    assert np.abs(flow - RING_OPTIMUM).max() <= 1e-6


def test_oracle_tree_returns_feasible_point_immediately():
    g = path_graph(4)
    cost = QuadraticCost(np.array([1.0, 2.0, 0.5]))
    supply = np.array([2.0, -1.0, 0.0, -1.0])
    flow = oracle_projected_gradient(g, cost, supply, steps=1)
    assert np.allclose(incidence(g) @ flow + supply, 0.0, atol=1e-10)


def test_oracle_zero_supply():
    flow = oracle_projected_gradient(RING, QuadraticCost(np.ones(3)), np.zeros(3))
    assert np.allclose(flow, 0.0, atol=1e-12)


def test_oracle_detects_divergent_rate():
    # non-uniform weights so the least-squares start is not already optimal
    cost = QuadraticCost(np.array([1.0, 5.0, 1.0]))
    with pytest.raises(OracleError):
        oracle_projected_gradient(RING, cost, RING_SUPPLY, rate=2.5)


def test_oracle_equivalence_random_instances():
    rng = np.random.default_rng(15)
    for _ in range(12):
        g = random_connected_graph(rng, max_nodes=8)
        cost = QuadraticCost(rng.uniform(0.4, 3.0, size=g.edge_count))
        supply = rng.normal(size=g.node_count)
        supply -= supply.mean()
        point = solve_static(g, cost, supply)
        flow = oracle_projected_gradient(g, cost, supply)
        assert np.abs(point.flow - flow).max() <= 1e-5


def test_strong_duality_quadratic():
    rng = np.random.default_rng(16)
    for _ in range(10):
        g = random_connected_graph(rng, max_nodes=7)
        weights = rng.uniform(0.5, 2.5, size=g.edge_count)
        cost = QuadraticCost(weights)
        supply = rng.normal(size=g.node_count)
        supply -= supply.mean()
        point = solve_static(g, cost, supply)
        from flowreg.graph import weighted_laplacian
        L = weighted_laplacian(g, weights).matrix
        dual_value = -0.5 * point.potential @ L @ point.potential - point.potential @ supply
        assert cost.value(point.flow) == pytest.approx(dual_value, abs=1e-8)


def test_quartic_solver_agrees_with_oracle():
    cost = QuarticCost(np.array([0.5, 1.0, 1.5]), np.array([1.0, 0.8, 1.2]))
    point = solve_static(RING, cost, RING_SUPPLY)
    flow = oracle_projected_gradient(RING, cost, RING_SUPPLY)
    assert np.abs(point.flow - flow).max() <= 1e-5
