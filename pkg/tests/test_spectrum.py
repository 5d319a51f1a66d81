"""Spectral primitives: SVD wrapper, rank decisions, truncation energy."""
import numpy as np
import pytest
from numpy.testing import assert_allclose

from smoa import (
    Matrix,
    RangeError,
    default_tolerance,
    numerical_rank,
    singular_values,
    svd,
    tail_energy,
    truncated_svd,
)

from conftest import random_matrix


class TestSvd:
    def test_reconstruction(self, rng):
        w = random_matrix(rng, 7, 5)
        dec = svd(w)
        assert_allclose(dec.reconstruct().data, w.data, atol=1e-12)

    def test_values_descending_and_nonnegative(self, rng):
        dec = svd(random_matrix(rng, 6, 9))
        vals = dec.singular_values
        assert np.all(vals[:-1] >= vals[1:])
        assert np.all(vals >= 0)

    def test_m_is_min_dimension(self, rng):
        assert svd(random_matrix(rng, 3, 8)).m == 3
        assert svd(random_matrix(rng, 8, 3)).m == 3

    def test_sign_convention_deterministic(self, rng):
        w = random_matrix(rng, 5, 5)
        first = svd(w)
        second = svd(Matrix(w.data.copy()))
        assert np.array_equal(first.left_vectors, second.left_vectors)
        assert np.array_equal(first.right_vectors, second.right_vectors)

    def test_sign_convention_leading_entries(self, rng):
        dec = svd(random_matrix(rng, 6, 6))
        for j in range(6):
            col = dec.left_vectors[:, j]
            lead = col[np.nonzero(col)[0][0]]
            assert lead > 0

    def test_orthonormal_factors(self, rng):
        dec = svd(random_matrix(rng, 5, 8))
        assert dec.left_vectors.shape == (5, 5)
        assert dec.right_vectors.shape == (8, 5)
        assert_allclose((dec.left_vectors.T @ dec.left_vectors).data, np.eye(5), atol=1e-12)
        assert_allclose((dec.right_vectors.T @ dec.right_vectors).data, np.eye(5), atol=1e-12)

    def test_values_match_svdvals_path(self, rng):
        w = random_matrix(rng, 6, 4)
        assert_allclose(svd(w).singular_values, singular_values(w), atol=1e-12)

    def test_decomposition_is_frozen(self, rng):
        dec = svd(random_matrix(rng, 3, 3))
        with pytest.raises(ValueError):
            dec.singular_values[0] = 99.0


class TestNumericalRank:
    def test_exact_low_rank_product(self, rng):
        g1 = rng.standard_normal((8, 3))
        g2 = rng.standard_normal((3, 8))
        assert numerical_rank(Matrix(g1 @ g2)) == 3

    def test_zero_matrix(self):
        assert numerical_rank(Matrix.zeros(4, 4)) == 0

    def test_threshold_is_strict(self):
        m = Matrix.diagonal([2.0, 1.0, 0.5], rows=3, cols=3)
        assert numerical_rank(m, epsilon=0.5) == 2
        assert numerical_rank(m, epsilon=0.49) == 3

    def test_negative_epsilon_rejected(self, rng):
        with pytest.raises(RangeError):
            numerical_rank(random_matrix(rng, 2, 2), epsilon=-1.0)

    def test_default_tolerance_formula(self):
        eps = np.finfo(np.float64).eps
        assert default_tolerance((100, 40), 3.0) == 100 * 3.0 * eps

    def test_matches_numpy_matrix_rank(self, rng):
        for _ in range(20):
            w = random_matrix(rng, 6, 5)
            assert numerical_rank(w) == np.linalg.matrix_rank(w.data)


class TestTruncation:
    def test_rank_zero_gives_zeros(self, rng):
        w = random_matrix(rng, 4, 6)
        assert np.array_equal(truncated_svd(w, 0).data, np.zeros((4, 6)))

    def test_full_rank_recovers_matrix(self, rng):
        w = random_matrix(rng, 5, 7)
        assert_allclose(truncated_svd(w, 5).data, w.data, atol=1e-12)

    def test_out_of_range(self, rng):
        w = random_matrix(rng, 4, 6)
        with pytest.raises(RangeError):
            truncated_svd(w, 5)
        with pytest.raises(RangeError):
            truncated_svd(w, -1)

    def test_truncation_has_expected_rank(self, rng):
        w = random_matrix(rng, 8, 8)
        assert numerical_rank(truncated_svd(w, 3)) == 3

    def test_best_approximation_beats_cross_truncations(self, rng):
        """Truncation at rank r must beat every other rank-r candidate we
        can build cheaply; here truncations of perturbed matrices."""
        w = random_matrix(rng, 6, 6)
        best = np.linalg.norm(w.data - truncated_svd(w, 2).data)
        for _ in range(10):
            other = truncated_svd(Matrix(w.data + 0.3 * rng.standard_normal((6, 6))), 2)
            assert np.linalg.norm(w.data - other.data) >= best - 1e-12


class TestTailEnergy:
    def test_matches_trailing_value_sum(self, rng):
        w = random_matrix(rng, 7, 5)
        vals = singular_values(w)
        for r in range(6):
            assert tail_energy(w, r) == pytest.approx(float(np.sum(vals[r:] ** 2)), rel=1e-12)

    def test_equals_residual_energy_of_truncation(self, rng):
        """Independent oracle: tail energy at r is the squared distance to
        the rank-r truncation."""
        w = random_matrix(rng, 6, 9)
        for r in (0, 1, 3, 6):
            residual = w.data - truncated_svd(w, r).data
            assert tail_energy(w, r) == pytest.approx(float(np.sum(residual**2)), rel=1e-9, abs=1e-12)

    def test_zero_at_full_rank(self, rng):
        w = random_matrix(rng, 4, 4)
        assert tail_energy(w, 4) <= 1e-20 * tail_energy(w, 0)

    def test_monotone_decreasing(self, rng):
        w = random_matrix(rng, 5, 5)
        energies = [tail_energy(w, r) for r in range(6)]
        assert all(a >= b for a, b in zip(energies, energies[1:]))

    def test_full_energy_is_squared_norm(self, rng):
        w = random_matrix(rng, 6, 3)
        assert tail_energy(w, 0) == pytest.approx(w.norm() ** 2, rel=1e-12)
