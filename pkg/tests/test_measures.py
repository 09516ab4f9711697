import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wassbary import (
    DiscreteMeasure,
    EntropyLevelSet,
    FullSimplex,
    UniformSingleton,
    build_cost_matrix,
    entropy,
    measure_from_image,
    normalize_weights,
    parse_constraint,
)


def brute_force_costs(X, Y, p):
    """Entrywise distance loop, the reference for the Gram-decomposition path."""
    X = np.atleast_2d(X)
    Y = np.atleast_2d(Y)
    out = np.zeros((X.shape[1], Y.shape[1]))
    for i in range(X.shape[1]):
        for j in range(Y.shape[1]):
            out[i, j] = np.linalg.norm(X[:, i] - Y[:, j]) ** p
    return out


class TestBuildCostMatrix:
    def test_one_dimensional_squared(self):
        M = build_cost_matrix([0.0, 1.0], [0.0, 2.0], 2.0)
        assert np.array_equal(M.entries, [[0.0, 4.0], [1.0, 1.0]])
        assert M.metric == "sqeuclidean"

    @pytest.mark.parametrize("p", [1.0, 2.0, 3.5])
    def test_self_cost_zero_diagonal_symmetric(self, rng, p):
        X = rng.normal(size=(3, 6))
        M = build_cost_matrix(X, X, p).entries
        assert np.allclose(np.diag(M), 0.0, atol=1e-12)
        assert np.allclose(M, M.T, atol=1e-12)

    def test_gram_path_matches_loop(self, rng):
        X = rng.uniform(-1, 1, (2, 3))
        Y = rng.uniform(-1, 1, (2, 4))
        M = build_cost_matrix(X, Y, 2.0).entries
        assert np.abs(M - brute_force_costs(X, Y, 2.0)).max() <= 1e-10

    def test_gram_path_matches_loop_large_coordinates(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            X = rng.uniform(-10, 10, (3, 5))
            Y = rng.uniform(-10, 10, (3, 4))
            M = build_cost_matrix(X, Y, 2.0).entries
            assert np.abs(M - brute_force_costs(X, Y, 2.0)).max() <= 1e-9

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError, match="dimensions differ"):
            build_cost_matrix(np.zeros((2, 3)), np.zeros((3, 3)), 2.0)

    def test_power_below_one(self):
        with pytest.raises(ValueError, match="exponent"):
            build_cost_matrix([0.0, 1.0], [0.0, 1.0], 0.5)


class TestNormalizeWeights:
    def test_uniform(self):
        assert np.array_equal(normalize_weights([2.0, 2.0]), [0.5, 0.5])

    def test_proportional(self):
        assert np.allclose(normalize_weights([1.0, 0.0, 3.0]), [0.25, 0.0, 0.75])

    def test_all_zero_rejected(self):
        with pytest.raises(ValueError):
            normalize_weights([0.0, 0.0])

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            normalize_weights([1.0, -0.5])

    @given(st.lists(st.floats(0.01, 100.0), min_size=1, max_size=8),
           st.floats(0.001, 1000.0))
    @settings(max_examples=50, deadline=None)
    def test_idempotent_and_scale_invariant(self, raw, c):
        w = np.array(raw)
        base = normalize_weights(w)
        assert abs(base.sum() - 1.0) <= 1e-12
        assert np.allclose(normalize_weights(base), base, atol=1e-15)
        assert np.allclose(normalize_weights(c * w), base, atol=1e-12)


class TestDiscreteMeasure:
    def test_weights_normalized_and_readonly(self):
        mu = DiscreteMeasure([[0.0, 1.0]], [2.0, 6.0])
        assert np.allclose(mu.weights, [0.25, 0.75])
        with pytest.raises(ValueError):
            mu.weights[0] = 1.0

    def test_length_mismatch(self):
        with pytest.raises(ValueError, match="atoms"):
            DiscreteMeasure([[0.0, 1.0]], [1.0, 1.0, 1.0])

    def test_pruned_drops_zero_atoms(self):
        mu = DiscreteMeasure([[0.0, 1.0, 2.0]], [0.5, 0.0, 0.5])
        assert mu.pruned().n_atoms == 2

    def test_from_rows_uniform(self):
        mu = DiscreteMeasure.from_rows(np.array([[0.0, 0.0], [1.0, 1.0]]))
        assert mu.dim == 2 and mu.n_atoms == 2
        assert np.allclose(mu.weights, 0.5)


class TestMeasureFromImage:
    def test_two_pixel_row(self):
        mu = measure_from_image(np.array([[1.0, 1.0]]))
        assert np.allclose(mu.weights, [0.5, 0.5])
        assert set(map(tuple, mu.support.T)) == {(0.0, 0.0), (0.0, 1.0)}

    def test_pruning_and_proportions(self):
        mu = measure_from_image(np.array([[1.0, 0.0], [0.0, 3.0]]))
        assert mu.n_atoms == 2
        assert np.allclose(sorted(mu.weights), [0.25, 0.75])

    def test_random_image_mass_and_atom_count(self, rng):
        img = rng.uniform(size=(20, 20))
        img[img < 0.3] = 0.0
        mu = measure_from_image(img)
        assert abs(mu.weights.sum() - 1.0) <= 1e-12
        assert mu.n_atoms == int((img > 0).sum())

    def test_all_zero_rejected(self):
        with pytest.raises(ValueError, match="positive"):
            measure_from_image(np.zeros((3, 4)))


class TestConstraints:
    def test_parse(self):
        assert isinstance(parse_constraint("simplex"), FullSimplex)
        assert isinstance(parse_constraint("uniform"), UniformSingleton)
        level = parse_constraint("entropy:0.5")
        assert isinstance(level, EntropyLevelSet) and level.tau == 0.5
        with pytest.raises(ValueError):
            parse_constraint("bogus")

    def test_entropy_threshold_bounds(self):
        with pytest.raises(ValueError):
            EntropyLevelSet(-0.1)
        with pytest.raises(ValueError):
            EntropyLevelSet(2.0).validate_dim(3)  # log(3) < 2

    def test_contains(self):
        uniform = np.full(4, 0.25)
        assert UniformSingleton().contains(uniform)
        assert not UniformSingleton().contains([0.5, 0.5, 0.0, 0.0])
        assert FullSimplex().contains([0.5, 0.5, 0.0, 0.0])
        assert EntropyLevelSet(np.log(4) - 1e-3).contains(uniform)
        assert not EntropyLevelSet(1.0).contains([0.99, 0.01, 0.0, 0.0])

    def test_entropy_helper(self):
        assert entropy([1.0, 0.0]) == 0.0
        assert abs(entropy(np.full(8, 0.125)) - np.log(8)) <= 1e-12
