"""Tests for spectral module."""

import numpy as np
import pytest

from src.dataset import panel_from_arrays
from src.exceptions import OrderError
from src.spectral import (
    EULER_GAMMA,
    adjusted_log_periodogram,
    cosine_design,
    cosine_series,
    dense_grid,
    fourier_grid,
    n_frequencies,
    periodogram,
    periodogram_frame,
)


class TestPeriodogram:
    """Tests for periodogram computation."""

    def test_number_of_frequencies(self):
        """Test that zero and Nyquist are dropped."""
        assert n_frequencies(100) == 49
        assert n_frequencies(101) == 50
        assert n_frequencies(4) == 1

    def test_matches_direct_dft(self):
        """Test against the defining sum."""
        rng = np.random.default_rng(3)
        x = rng.standard_normal(11)
        t = np.arange(11)

        p = periodogram(x)

        for ell in range(1, 6):
            direct = abs(np.sum(x * np.exp(-2j * np.pi * ell * t / 11))) ** 2 / 11
            assert p.values[0, ell - 1] == pytest.approx(direct, rel=1e-12)

    def test_pure_cosine_concentrates_power(self):
        """Test that a cosine at Fourier frequency 3/16 puts all power in one ordinate."""
        t = np.arange(16)
        x = np.cos(2 * np.pi * 3 * t / 16)

        p = periodogram(x)

        assert np.argmax(p.values[0]) == 2
        assert p.values[0, 2] == pytest.approx(4.0)
        np.testing.assert_allclose(np.delete(p.values[0], 2), 0.0, atol=1e-20)

    def test_constant_series_has_zero_periodogram(self):
        """Test that the mean does not leak into retained frequencies."""
        p = periodogram(np.full((2, 10), 3.5))

        np.testing.assert_allclose(p.values, 0.0, atol=1e-20)

    def test_panel_keeps_subjects(self):
        """Test subject ids on a panel periodogram."""
        panel, _ = panel_from_arrays(np.random.default_rng(0).standard_normal((3, 20)), subjects=["x", "y", "z"])

        p = periodogram(panel)

        assert p.subjects == ("x", "y", "z")
        assert p.N == 3
        assert p.m == 9
        np.testing.assert_allclose(p.freqs, np.arange(1, 10) / 20)

    def test_mean_shift_invariance(self):
        """Test that adding a constant leaves every ordinate unchanged."""
        x = np.random.default_rng(6).standard_normal((4, 37))

        shifted = periodogram(x + 12.5)

        np.testing.assert_allclose(shifted.values, periodogram(x).values, rtol=1e-9, atol=1e-9)

    @pytest.mark.parametrize("T", [31, 32])
    def test_retained_band_carries_half_the_power(self, T):
        """Test 2 sum Y <= sum (x - mean)^2, with equality for odd T."""
        x = np.random.default_rng(T).standard_normal((5, T))
        centered = np.sum((x - x.mean(axis=1, keepdims=True)) ** 2, axis=1)

        band = 2.0 * periodogram(x).values.sum(axis=1)

        assert np.all(band <= centered + 1e-9)
        if T % 2:
            np.testing.assert_allclose(band, centered, rtol=1e-10)

    def test_too_short_raises(self):
        """Test T < 4."""
        with pytest.raises(ValueError):
            periodogram(np.ones(3))


class TestCosineDesign:
    """Tests for the cosine design matrix."""

    def test_first_column_is_ones(self):
        """Test intercept column and sqrt(2) scaling."""
        design = cosine_design(20, 3)

        np.testing.assert_array_equal(design.rows[:, 0], 1.0)
        assert design.rows[0, 1] == pytest.approx(np.sqrt(2) * np.cos(2 * np.pi / 20))
        assert design.rows.shape == (9, 3)

    def test_gram_matrix(self):
        """Test the diagonal of C'C for odd T."""
        T = 21
        design = cosine_design(T, n_frequencies(T))
        gram = design.rows.T @ design.rows
        m = n_frequencies(T)

        np.testing.assert_allclose(np.diag(gram)[1:], m - 0.5, rtol=1e-10)
        assert gram[0, 0] == pytest.approx(m)

    @pytest.mark.parametrize("T", [20, 21])
    def test_gram_matrix_brute_force(self, T):
        """Test C'C against sums of cosine products over l = 1..m."""
        m = n_frequencies(T)
        rows = cosine_design(T, m).rows
        gram = rows.T @ rows

        def column(k, ell):
            return 1.0 if k == 0 else np.sqrt(2.0) * np.cos(2.0 * np.pi * ell * k / T)

        for i in range(m):
            for j in range(m):
                expected = sum(column(i, ell) * column(j, ell) for ell in range(1, m + 1))
                assert gram[i, j] == pytest.approx(expected, abs=1e-9)
        if T % 2:
            inner = gram[1:, 1:] - np.diag(np.diag(gram[1:, 1:]))
            np.testing.assert_allclose(inner[~np.eye(m - 1, dtype=bool)], -1.0, atol=1e-9)
            np.testing.assert_allclose(gram[0, 1:], -np.sqrt(2.0) / 2.0, atol=1e-9)

    @pytest.mark.parametrize("K", [0, 10])
    def test_invalid_order_raises(self, K):
        """Test K outside 1..floor((T-1)/2)."""
        with pytest.raises(OrderError):
            cosine_design(20, K)


class TestCosineSeries:
    """Tests for cosine series evaluation."""

    def test_even_symmetry(self):
        """Test F(omega) = F(-omega) and F(omega) = F(1 - omega)."""
        grid = dense_grid(33)
        coefficients = [1.0, 0.5, -0.3, 0.2]

        values = cosine_series(coefficients, grid)

        np.testing.assert_allclose(values, cosine_series(coefficients, -grid))
        np.testing.assert_allclose(values, cosine_series(coefficients, 1.0 - grid), atol=1e-12)

    def test_constant(self):
        """Test a single coefficient."""
        np.testing.assert_allclose(cosine_series([2.5], fourier_grid(10)), 2.5)

    def test_non_finite_grid_raises(self):
        """Test NaN in the grid."""
        with pytest.raises(ValueError):
            cosine_series([1.0, 1.0], [0.1, np.nan])


class TestAdjustedLogPeriodogram:
    """Tests for the bias-adjusted log-periodogram."""

    def test_adds_euler_gamma(self):
        """Test log(Y) + gamma."""
        y = np.array([[1.0, np.e, 4.0]])

        np.testing.assert_allclose(adjusted_log_periodogram(y), np.log(y) + EULER_GAMMA)

    def test_zero_ordinate_floored(self):
        """Test that zeros are floored instead of giving -inf."""
        adjusted = adjusted_log_periodogram(np.array([[0.0, 2.0]]))

        assert np.all(np.isfinite(adjusted))
        assert adjusted[0, 0] == pytest.approx(np.log(1e-12) + EULER_GAMMA)

    def test_non_positive_floor_raises(self):
        """Test invalid explicit floor."""
        with pytest.raises(ValueError):
            adjusted_log_periodogram(np.ones((1, 3)), floor=0.0)


class TestPeriodogramFrame:
    """Tests for long-format export."""

    def test_hz_column(self):
        """Test optional Hz column."""
        frame = periodogram_frame(["a", "b"], np.array([0.1, 0.2]), np.ones((2, 2)), sampling_rate=2.0)

        assert list(frame.columns) == ["subject", "freq", "freq_hz", "value"]
        np.testing.assert_allclose(frame["freq_hz"], [0.2, 0.4, 0.2, 0.4])

    def test_without_sampling_rate(self):
        """Test cycles-per-sample only."""
        frame = periodogram_frame(["a"], np.array([0.1, 0.2]), np.array([3.0, 4.0]))

        assert list(frame.columns) == ["subject", "freq", "value"]
        assert len(frame) == 2
