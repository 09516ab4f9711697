import numpy as np
import pytest

from conftest import random_instance, random_simplex
from wassbary import (
    DualPotentials,
    InstanceTooLargeError,
    TransportPlan,
    brute_force_cost,
    build_cost_matrix,
    solve_dual,
    solve_primal,
)
from wassbary.exact import _enumerate_vertices_cost, _linprog_cost

# Hand-derived 2x2 fixture: the feasible set is the one-parameter family
# t11 in [0, 0.3] and the cost 1.6 + t11 is minimized at the vertex t11 = 0.
FIXTURE_A = np.array([0.3, 0.7])
FIXTURE_B = np.array([0.6, 0.4])
FIXTURE_M = np.array([[0.0, 2.0], [1.0, 4.0]])
FIXTURE_COST = 1.6
FIXTURE_PLAN = np.array([[0.0, 0.3], [0.6, 0.1]])


class TestSolvePrimal:
    def test_self_transport_is_free(self, rng):
        X = rng.normal(size=(2, 5))
        M = build_cost_matrix(X, X, 2.0)
        a = random_simplex(rng, 5)
        cost, plan = solve_primal(a, a, M)
        assert cost <= 1e-12
        assert np.allclose(plan.matrix, np.diag(a), atol=1e-12)

    def test_single_row_forced(self, rng):
        b = random_simplex(rng, 4)
        M = rng.uniform(size=(1, 4))
        cost, plan = solve_primal([1.0], b, M)
        assert abs(cost - float(b @ M[0])) <= 1e-12
        assert np.allclose(plan.matrix[0], b)

    def test_two_by_two_fixture(self):
        cost, plan = solve_primal(FIXTURE_A, FIXTURE_B, FIXTURE_M)
        assert abs(cost - FIXTURE_COST) <= 1e-10
        assert np.allclose(plan.matrix, FIXTURE_PLAN, atol=1e-10)

    def test_zero_weights_allowed(self, rng):
        a = np.array([0.0, 0.4, 0.6, 0.0])
        b = random_simplex(rng, 3)
        M = rng.uniform(size=(4, 3))
        cost, plan = solve_primal(a, b, M)
        assert np.allclose(plan.matrix.sum(axis=1), a, atol=1e-12)
        assert cost >= 0.0

    def test_unbalanced_rejected(self):
        with pytest.raises(ValueError, match="sum to 1"):
            solve_primal([0.3, 0.3], [0.5, 0.5], np.ones((2, 2)))

    def test_deterministic(self, rng):
        a, b, M = random_instance(rng, 5, 5)
        _, plan1 = solve_primal(a, b, M)
        _, plan2 = solve_primal(a, b, M)
        assert np.array_equal(plan1.matrix, plan2.matrix)


class TestSolveDual:
    def test_single_cell(self):
        duals = solve_dual([1.0], [1.0], [[3.7]])
        assert duals.alpha == pytest.approx([0.0])
        assert duals.beta == pytest.approx([3.7])

    def test_zero_cost_instance(self, rng):
        X = rng.normal(size=(2, 4))
        M = build_cost_matrix(X, X, 2.0)
        a = random_simplex(rng, 4)
        duals = solve_dual(a, a, M)
        assert abs(duals.objective(a, a)) <= 1e-10

    def test_fixture_strong_duality(self):
        duals = solve_dual(FIXTURE_A, FIXTURE_B, FIXTURE_M)
        assert abs(duals.objective(FIXTURE_A, FIXTURE_B) - FIXTURE_COST) <= 1e-8
        assert duals.is_feasible(FIXTURE_M)
        assert abs(duals.alpha.sum()) <= 1e-10


class TestBruteForce:
    def test_fixture(self):
        assert abs(brute_force_cost(FIXTURE_A, FIXTURE_B, FIXTURE_M) - FIXTURE_COST) <= 1e-6

    def test_single_row_exact(self, rng):
        b = random_simplex(rng, 6)
        M = rng.uniform(size=(1, 6))
        assert brute_force_cost([1.0], b, M) == pytest.approx(float(b @ M[0]))

    def test_zero_cost_diagonal(self):
        assert brute_force_cost([0.5, 0.5], [0.5, 0.5], [[0.0, 1.0], [1.0, 0.0]]) <= 1e-12

    def test_too_large_rejected(self):
        with pytest.raises(InstanceTooLargeError):
            brute_force_cost(np.full(6, 1 / 6), np.full(6, 1 / 6), np.ones((6, 6)))

    def test_enumeration_agrees_with_lp(self, rng):
        for _ in range(10):
            a, b, M = random_instance(rng, 3, 3)
            assert _enumerate_vertices_cost(a, b, M) == pytest.approx(
                _linprog_cost(a, b, M), abs=1e-9
            )


class TestProperties:
    def test_strong_duality_random(self, rng):
        for _ in range(30):
            n, m = rng.integers(1, 6, size=2)
            a, b, M = random_instance(rng, int(n), int(m))
            cost, _ = solve_primal(a, b, M)
            duals = solve_dual(a, b, M)
            assert abs(cost - duals.objective(a, b)) <= 1e-8
            assert duals.is_feasible(M, tol=1e-8)

    def test_oracle_agreement(self, rng):
        for n, m in [(2, 2), (2, 3), (3, 3), (2, 4), (3, 4), (4, 4), (4, 5), (5, 5)]:
            a, b, M = random_instance(rng, n, m)
            cost, _ = solve_primal(a, b, M)
            assert abs(cost - brute_force_cost(a, b, M)) <= 1e-6

    def test_dual_is_subgradient_in_row_weights(self, rng):
        b = random_simplex(rng, 4)
        M = random_instance(rng, 5, 4)[2]
        for _ in range(20):
            a = random_simplex(rng, 5)
            a_other = random_simplex(rng, 5)
            cost, _ = solve_primal(a, b, M)
            cost_other, _ = solve_primal(a_other, b, M)
            alpha = solve_dual(a, b, M).alpha
            assert cost_other >= cost + float(alpha @ (a_other - a)) - 1e-8

    def test_cost_convex_in_row_weights(self, rng):
        b = random_simplex(rng, 3)
        M = random_instance(rng, 4, 3)[2]
        for _ in range(20):
            a1 = random_simplex(rng, 4)
            a2 = random_simplex(rng, 4)
            theta = rng.uniform()
            mix = theta * a1 + (1 - theta) * a2
            lhs, _ = solve_primal(mix, b, M)
            c1, _ = solve_primal(a1, b, M)
            c2, _ = solve_primal(a2, b, M)
            assert lhs <= theta * c1 + (1 - theta) * c2 + 1e-8


class TestDomainTypes:
    def test_plan_validates_marginals(self):
        with pytest.raises(ValueError, match="marginals"):
            TransportPlan(np.eye(2) * 0.4, [0.5, 0.5], [0.5, 0.5])

    def test_plan_rejects_negative(self):
        with pytest.raises(ValueError, match="negative"):
            TransportPlan([[-0.5, 1.0], [0.5, 0.0]], [0.5, 0.5], [0.0, 1.0])

    def test_duals_normalized(self):
        duals = DualPotentials([1.0, 3.0], [0.0, 0.0])
        assert abs(duals.alpha.sum()) <= 1e-12
        assert duals.objective([0.5, 0.5], [0.5, 0.5]) == pytest.approx(2.0)
