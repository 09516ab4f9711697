import numpy as np
import pytest

from conftest import random_instance, random_simplex
from wassbary import (
    ScalingPair,
    SinkhornUnderflowError,
    TransportBatch,
    auto_lambda,
    brute_force_cost,
    gibbs_kernel,
    log_domain_plan,
    sinkhorn_log_domain,
    sinkhorn_scaling,
    smoothed_dual_alpha,
    smoothed_dual_objective,
    smoothed_primal,
    smoothed_transport,
    smoothed_transport_batch,
    solve_primal,
)

from test_exact import FIXTURE_A, FIXTURE_B, FIXTURE_M, FIXTURE_PLAN


def underflow_instance(rng, n=3, m=3):
    """Cost matrix whose first row underflows entirely at lam*max(M)=5000."""
    M = rng.uniform(0.1, 1.0, size=(n, m))
    M[0] = rng.uniform(0.5, 1.0, size=m)
    M[1, 0] = 1.0  # pin the maximum off the bad row
    a = random_simplex(rng, n)
    b = random_simplex(rng, m)
    return a, b, M, 5000.0 / M.max()


class TestScaling:
    def test_zero_cost_gives_product_plan(self, rng):
        a = random_simplex(rng, 3)
        b = random_simplex(rng, 4)
        M = np.zeros((3, 4))
        pair = sinkhorn_scaling(a, b, M, lam=5.0)
        plan = smoothed_primal(pair, gibbs_kernel(M, 5.0))
        assert np.allclose(plan, np.outer(a, b), atol=1e-12)

    def test_single_cell(self):
        pair = sinkhorn_scaling([1.0], [1.0], [[0.7]], lam=3.0)
        plan = smoothed_primal(pair, gibbs_kernel(np.array([[0.7]]), 3.0))
        assert np.allclose(plan, [[1.0]], atol=1e-12)
        assert smoothed_dual_alpha(pair, 3.0) == pytest.approx([0.0])

    def test_gap_to_exact_on_random_instance(self, rng):
        a, b, M = random_instance(rng, 5, 5)
        lam = 500.0 / M.max()
        sol = smoothed_transport(a, b, M, lam, tol=1e-9)
        exact, _ = solve_primal(a, b, M)
        gap = sol.transport_cost - exact
        assert -1e-8 <= gap <= np.log(25) / lam + 1e-8

    def test_zero_weight_rejected(self):
        with pytest.raises(ValueError, match="positive"):
            sinkhorn_scaling([0.0, 1.0], [0.5, 0.5], np.ones((2, 2)), lam=1.0)

    def test_underflow_refused_with_guidance(self, rng):
        a, b, M, lam = underflow_instance(rng)
        with pytest.raises(SinkhornUnderflowError, match="log-domain"):
            sinkhorn_scaling(a, b, M, lam)

    def test_warm_start_resumes_converged_run(self, rng):
        a, b, M = random_instance(rng, 4, 4)
        pair = sinkhorn_scaling(a, b, M, lam=20.0)
        again = sinkhorn_scaling(a, b, M, lam=20.0, warm_u=pair.u)
        assert again.iterations == 0
        assert again.converged

    def test_empirical_linear_convergence(self, rng):
        a, b, M = random_instance(rng, 6, 6)
        lam = 100.0 / M.max()
        errs = {}
        for k in (10, 20, 40):
            pair = sinkhorn_scaling(a, b, M, lam, tol=0.0, max_iter=k)
            assert pair.iterations == k
            errs[k] = pair.marginal_error
        assert errs[20] <= errs[10]
        assert errs[40] <= errs[20]

    def test_pair_validation(self):
        with pytest.raises(ValueError, match="positive"):
            ScalingPair(np.array([1.0, 0.0]), np.array([1.0]), 1, True, 0.0)


class TestPlanExtraction:
    def test_vertex_limit_of_two_by_two(self):
        # lam*max(M) = 2000 singles out the unique vertex optimum.
        lam = 2000.0 / FIXTURE_M.max()
        pair = sinkhorn_log_domain(FIXTURE_A, FIXTURE_B, FIXTURE_M, lam, tol=1e-10,
                                   max_iter=200_000)
        plan = log_domain_plan(pair, FIXTURE_M, lam)
        assert np.abs(plan - FIXTURE_PLAN).max() <= 1e-2

    def test_row_permutation_equivariance(self, rng):
        a, b, M = random_instance(rng, 4, 3)
        perm = np.array([2, 0, 3, 1])
        lam = 30.0
        base = smoothed_transport(a, b, M, lam, tol=1e-10)
        permuted = smoothed_transport(a[perm], b, M[perm], lam, tol=1e-10)
        assert np.allclose(permuted.plan.matrix, base.plan.matrix[perm], atol=1e-9)

    def test_scaling_freedom_leaves_outputs_unchanged(self, rng):
        a, b, M = random_instance(rng, 4, 5)
        lam = 25.0
        pair = sinkhorn_scaling(a, b, M, lam, tol=1e-10)
        K = gibbs_kernel(M, lam)
        for c in (2.0, 3.7, 0.125):
            rescaled = ScalingPair(c * pair.u, pair.v / c, pair.iterations,
                                   pair.converged, pair.marginal_error)
            assert np.allclose(smoothed_primal(rescaled, K),
                               smoothed_primal(pair, K), rtol=1e-12, atol=1e-15)
            assert np.allclose(smoothed_dual_alpha(rescaled, lam),
                               smoothed_dual_alpha(pair, lam), atol=1e-12)

    def test_non_converged_pair_refused_unless_forced(self, rng):
        a, b, M = random_instance(rng, 4, 4)
        pair = sinkhorn_scaling(a, b, M, lam=200.0 / M.max(), tol=0.0, max_iter=3)
        K = gibbs_kernel(M, 200.0 / M.max())
        with pytest.raises(RuntimeError, match="force"):
            smoothed_primal(pair, K)
        assert smoothed_primal(pair, K, force=True).shape == (4, 4)


class TestDualVector:
    def test_constant_cost_rows_give_zero_alpha(self):
        # Fully symmetric problem: constant u up to scaling, so alpha = 0.
        n = 4
        M = np.ones((n, n)) - np.eye(n)
        a = np.full(n, 1.0 / n)
        pair = sinkhorn_scaling(a, a, M, lam=10.0, tol=1e-12)
        assert np.abs(smoothed_dual_alpha(pair, 10.0)).max() <= 1e-10

    def test_matches_finite_differences(self, rng):
        a, b, M = random_instance(rng, 4, 3)
        lam = 50.0
        pair = sinkhorn_scaling(a, b, M, lam, tol=1e-13, max_iter=100_000)
        alpha = smoothed_dual_alpha(pair, lam)
        assert abs(alpha.sum()) <= 1e-10
        eps = 1e-5
        for _ in range(5):
            direction = rng.normal(size=4)
            direction -= direction.mean()
            up = smoothed_dual_objective(a + eps * direction, b, M, lam, tol=1e-13)
            down = smoothed_dual_objective(a - eps * direction, b, M, lam, tol=1e-13)
            assert abs((up - down) / (2 * eps) - float(alpha @ direction)) <= 1e-4

    def test_dual_value_consistent_with_regularized_cost(self, rng):
        # At the fixed point the dual objective equals the entropic primal
        # value minus 1/lam (the plan's unit mass).
        a, b, M = random_instance(rng, 5, 4)
        lam = 40.0
        sol = smoothed_transport(a, b, M, lam, tol=1e-12)
        dual = smoothed_dual_objective(a, b, M, lam, tol=1e-12)
        assert abs(dual + 1.0 / lam - sol.regularized_cost) <= 1e-9


class TestLogDomain:
    def test_agrees_with_plain_at_small_lam(self, rng):
        a, b, M = random_instance(rng, 3, 3)
        lam = 1.0 / M.max()
        plain = smoothed_transport(a, b, M, lam, tol=1e-12)
        logd = smoothed_transport(a, b, M, lam, tol=1e-12, log_domain=True)
        assert np.abs(plain.plan.matrix - logd.plan.matrix).max() <= 1e-8
        assert np.abs(plain.alpha - logd.alpha).max() <= 1e-8

    def test_survives_extreme_regularization(self, rng):
        a, b, M, lam = underflow_instance(rng)
        sol = smoothed_transport(a, b, M, lam, tol=1e-6, max_iter=500_000,
                                 log_domain=True)
        plan = sol.plan.matrix
        assert np.all(np.isfinite(plan))
        assert np.abs(plan.sum(axis=1) - a).sum() <= 1e-6
        assert np.abs(plan.sum(axis=0) - b).sum() <= 1e-6

    def test_zero_cost(self, rng):
        a = random_simplex(rng, 3)
        b = random_simplex(rng, 2)
        pair = sinkhorn_log_domain(a, b, np.zeros((3, 2)), lam=2.0)
        assert np.allclose(log_domain_plan(pair, np.zeros((3, 2)), 2.0),
                           np.outer(a, b), atol=1e-12)


class TestMonotonicityAndGap:
    def test_cost_non_increasing_in_lam(self, rng):
        a, b, M = random_instance(rng, 5, 6)
        lams = np.array([1.0, 10.0, 100.0, 1000.0]) / M.max()
        costs = [
            smoothed_transport(a, b, M, lam, tol=1e-10, max_iter=500_000,
                               log_domain=True).transport_cost
            for lam in lams
        ]
        for lo, hi in zip(costs[1:], costs[:-1]):
            assert lo <= hi + 1e-10

    def test_entropic_gap_bound(self, rng):
        for _ in range(5):
            n, m = rng.integers(2, 6, size=2)
            a, b, M = random_instance(rng, int(n), int(m))
            exact = brute_force_cost(a, b, M)
            for lam in (10.0 / M.max(), 100.0 / M.max()):
                sol = smoothed_transport(a, b, M, lam, tol=1e-10)
                gap = sol.transport_cost - exact
                assert -1e-8 <= gap <= np.log(n * m) / lam + 1e-8
                assert sol.regularized_cost <= sol.transport_cost + 1e-12


class TestBatch:
    def test_single_target_matches_direct_call(self, rng):
        a, b, M = random_instance(rng, 4, 4)
        sols = smoothed_transport_batch(a, [(b, M)], 12.0)
        direct = smoothed_transport(a, b, M, 12.0)
        assert np.array_equal(sols[0].plan.matrix, direct.plan.matrix)

    def test_identical_targets_identical_solutions(self, rng):
        a, b, M = random_instance(rng, 3, 5)
        sols = smoothed_transport_batch(a, [(b, M)] * 3, 9.0)
        for sol in sols[1:]:
            assert np.array_equal(sol.plan.matrix, sols[0].plan.matrix)

    def test_bitwise_equal_to_sequential_runs(self, rng):
        a, b1, M1 = random_instance(rng, 4, 3)
        b2, M2 = random_instance(rng, 4, 5)[1:]
        lam = 15.0
        batch = smoothed_transport_batch(a, [(b1, M1), (b2, M2)], lam)
        singles = [smoothed_transport(a, b1, M1, lam),
                   smoothed_transport(a, b2, M2, lam)]
        for got, want in zip(batch, singles):
            assert np.array_equal(got.plan.matrix, want.plan.matrix)
            assert np.array_equal(got.alpha, want.alpha)

    def test_warm_starts_persist_across_calls(self, rng):
        a, b, M = random_instance(rng, 4, 6)
        batch = TransportBatch([(b, M)], 18.0)
        first = batch.solve(a)
        second = batch.solve(a)
        assert first[0].iterations > 0
        assert second[0].iterations == 0

    def test_error_carries_target_index(self, rng):
        a, b, M, lam = underflow_instance(rng)
        good_M = rng.uniform(0.0, 0.2, size=M.shape)
        with pytest.raises(SinkhornUnderflowError, match="target measure 1"):
            TransportBatch([(b, good_M), (b, M)], lam)


class TestAutoLambda:
    def test_lower_median_of_positive_entries(self):
        M = np.array([[0.0, 1.0], [2.0, 4.0]])
        # positive entries sorted: 1, 2, 4 -> lower median 2
        assert auto_lambda(M) == pytest.approx(60.0 / 2.0)
        M_even = np.array([[0.0, 1.0], [3.0, 4.0]])
        # positive entries 1, 3, 4 ... add one more: use 4 entries
        M_even = np.array([[5.0, 1.0], [3.0, 4.0]])
        # sorted: 1, 3, 4, 5 -> lower median 3
        assert auto_lambda(M_even) == pytest.approx(60.0 / 3.0)

    def test_all_zero_rejected(self):
        with pytest.raises(ValueError, match="positive"):
            auto_lambda(np.zeros((2, 2)))
