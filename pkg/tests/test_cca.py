"""Tests for cca module."""

import numpy as np
import pytest

from src.cca import (
    canonical_scores,
    cepstral_cca,
    covariances,
    log_spectral_weight,
    population_cca,
    pseudo_inverse,
    result_to_dict,
    sym_inverse_sqrt,
)
from src.cepstral import fit_panel
from src.exceptions import DegenerateCcaError, InputError, MatrixError, SingularOutcomeError
from src.simulate import SimulationDesign, population_covariances, replicate_rng, simulate_panel
from src.spectral import periodogram


def textbook_cca(f, z):
    """Canonical correlations and weights from QR of the centered data and an SVD."""
    n = f.shape[0]
    qf, rf = np.linalg.qr(f - f.mean(axis=0))
    qz, rz = np.linalg.qr(z - z.mean(axis=0))
    u, s, vt = np.linalg.svd(qf.T @ qz)
    q = min(f.shape[1], z.shape[1])
    a = np.linalg.solve(rf, u[:, :q]) * np.sqrt(n - 1)
    b = np.linalg.solve(rz, vt.T[:, :q]) * np.sqrt(n - 1)
    return s[:q], a.T, b.T


class TestPopulationCca:
    """Tests on the exact covariances of the simulation design."""

    @pytest.fixture
    def result(self):
        return population_cca(*population_covariances(SimulationDesign()))

    def test_correlations(self, result):
        """Test rho = (0.5, 0.25, 0)."""
        np.testing.assert_allclose(result.correlations, [0.5, 0.25, 0.0], atol=1e-10)

    def test_outcome_weights(self, result):
        """Test B1 = (0.5, 0, 0) and B2 = (0, 0.5, 0)."""
        np.testing.assert_allclose(result.outcome_weights[0], [0.5, 0.0, 0.0], atol=1e-10)
        np.testing.assert_allclose(result.outcome_weights[1], [0.0, 0.5, 0.0], atol=1e-10)

    def test_cepstral_weights(self, result):
        """Test a1 = 0.5 at k = 2 and a2 = 0.5 at k = 3."""
        np.testing.assert_allclose(result.cepstral_weights[0], [0.0, 0.0, 0.5, 0.0], atol=1e-10)
        np.testing.assert_allclose(result.cepstral_weights[1], [0.0, 0.0, 0.0, 0.5], atol=1e-10)

    def test_zero_pair_flagged(self, result):
        """Test that the zero-correlation pair is not identified and has zero a."""
        assert list(result.identified) == [True, True, False]
        np.testing.assert_array_equal(result.cepstral_weights[2], 0.0)

    def test_padding_k_does_not_change_result(self):
        """Test that extra zero-variance cepstral coordinates are ignored."""
        padded = population_cca(*population_covariances(SimulationDesign(), K=7))

        np.testing.assert_allclose(padded.correlations, [0.5, 0.25, 0.0], atol=1e-10)
        np.testing.assert_allclose(padded.cepstral_weights[0, :4], [0.0, 0.0, 0.5, 0.0], atol=1e-10)
        np.testing.assert_allclose(padded.cepstral_weights[0, 4:], 0.0, atol=1e-10)

    def test_log_spectral_weight(self, result):
        """Test A1(omega) = 0.5 sqrt(2) cos(4 pi omega)."""
        grid = np.linspace(0.0, 0.5, 11)

        np.testing.assert_allclose(
            log_spectral_weight(result.cepstral_weights[0], grid),
            0.5 * np.sqrt(2) * np.cos(4 * np.pi * grid),
            atol=1e-10,
        )

    def test_tied_eigenvalues_flagged(self):
        """Test that equal canonical correlations are flagged."""
        result = population_cca(np.eye(2), 0.5 * np.eye(2), np.eye(2))

        np.testing.assert_allclose(result.correlations, [0.5, 0.5])
        assert result.tied.all()


class TestSampleCca:
    """Tests of the plug-in estimator on sample data."""

    def test_matches_textbook_cca(self):
        """Test correlations and absolute weights against a QR/SVD implementation."""
        rng = np.random.default_rng(77)
        for _ in range(100):
            n = int(rng.integers(20, 201))
            k = int(rng.integers(1, 9))
            p = int(rng.integers(1, 6))
            if n < k + p + 2:
                n = k + p + 2
            f = rng.standard_normal((n, k))
            z = f[:, :1] @ rng.normal(size=(1, p)) * 0.7 + rng.standard_normal((n, p))

            result = cepstral_cca(covariances(f, z))
            rho, a, b = textbook_cca(f, z)

            assert result.Q == min(k, p)
            np.testing.assert_allclose(result.correlations, rho, atol=1e-6)
            np.testing.assert_allclose(np.abs(result.cepstral_weights), np.abs(a), rtol=1e-6, atol=1e-6)
            np.testing.assert_allclose(np.abs(result.outcome_weights), np.abs(b), rtol=1e-6, atol=1e-6)

    def test_perfect_correlation(self):
        """Test P = 1 outcome equal to a cepstral score gives rho = 1."""
        rng = np.random.default_rng(3)
        f = rng.standard_normal((60, 4))
        z = f @ np.array([1.0, -2.0, 0.5, 0.0])

        result = cepstral_cca(covariances(f, z))

        assert result.correlations[0] == pytest.approx(1.0, abs=1e-8)

    def test_sign_convention(self):
        """Test that the largest outcome weight of every pair is positive."""
        rng = np.random.default_rng(9)
        f = rng.standard_normal((80, 5))
        z = -f[:, :3] + rng.standard_normal((80, 3))

        result = cepstral_cca(covariances(f, z))

        for weights in result.outcome_weights:
            assert weights[np.argmax(np.abs(weights))] > 0

    def test_scores_have_unit_variance_and_rho_correlation(self):
        """Test canonical variables: variance 1 and correlation rho_q."""
        rng = np.random.default_rng(12)
        f = rng.standard_normal((150, 4))
        z = f[:, :2] + rng.standard_normal((150, 2))
        bundle = covariances(f, z)
        result = cepstral_cca(bundle)

        scores = canonical_scores(result, f, z, bundle)

        for q in range(result.Q):
            np.testing.assert_allclose(scores[:, q, 0].var(ddof=1), 1.0, rtol=1e-8)
            np.testing.assert_allclose(scores[:, q, 1].var(ddof=1), 1.0, rtol=1e-8)
            np.testing.assert_allclose(np.corrcoef(scores[:, q, 0], scores[:, q, 1])[0, 1], result.correlations[q], atol=1e-8)

    def test_correlations_invariant_to_affine_outcome_maps(self):
        """Test that Z M' + 1 c' leaves every correlation unchanged."""
        rng = np.random.default_rng(23)
        f = rng.standard_normal((90, 5))
        z = f[:, :3] @ rng.normal(size=(3, 3)) + rng.standard_normal((90, 3))
        m = rng.normal(size=(3, 3)) + 3.0 * np.eye(3)
        c = rng.normal(size=3) * 10.0

        base = cepstral_cca(covariances(f, z))
        mapped = cepstral_cca(covariances(f, z @ m.T + c))

        np.testing.assert_allclose(mapped.correlations, base.correlations, atol=1e-8)

    def test_nonzero_correlations_bounded_by_rank(self):
        """Test that at most min(P, rank) correlations exceed 1e-8."""
        rng = np.random.default_rng(4)
        for rank, p in [(1, 3), (2, 3), (2, 1), (4, 2)]:
            f = rng.standard_normal((70, rank)) @ rng.standard_normal((rank, 6))
            z = f[:, :p] + rng.standard_normal((70, p))
            bundle = covariances(f, z)

            result = cepstral_cca(bundle)

            assert bundle.rank_f == rank
            assert int(np.sum(result.correlations > 1e-8)) <= min(p, rank)

    def test_scores_of_different_pairs_uncorrelated(self):
        """Test zero correlation between canonical variables of distinct pairs."""
        rng = np.random.default_rng(15)
        f = rng.standard_normal((120, 5))
        z = f[:, :3] + 0.8 * rng.standard_normal((120, 3))
        bundle = covariances(f, z)
        result = cepstral_cca(bundle)

        scores = canonical_scores(result, f, z, bundle)

        for q in range(result.Q):
            for r in range(result.Q):
                if q == r:
                    continue
                assert abs(np.corrcoef(scores[:, q, 0], scores[:, r, 0])[0, 1]) < 1e-6
                assert abs(np.corrcoef(scores[:, q, 1], scores[:, r, 1])[0, 1]) < 1e-6
                assert abs(np.corrcoef(scores[:, q, 0], scores[:, r, 1])[0, 1]) < 1e-6

    def test_scores_dimension_mismatch_raises(self):
        """Test scoring data with the wrong number of columns."""
        rng = np.random.default_rng(1)
        f = rng.standard_normal((30, 3))
        z = rng.standard_normal((30, 2))
        result = cepstral_cca(covariances(f, z))

        with pytest.raises(InputError):
            canonical_scores(result, f[:, :2], z)

    def test_to_dict(self):
        """Test JSON-ready conversion."""
        result = population_cca(*population_covariances(SimulationDesign()))

        data = result_to_dict(result, ["x", "y", "w"])

        assert data["Q"] == 3
        assert data["variable_names"] == ["x", "y", "w"]
        assert data["identified"] == [True, True, False]


class TestCovariances:
    """Tests for sample moments and their failure modes."""

    def test_too_few_subjects_raises(self):
        """Test N < P + 1."""
        with pytest.raises(InputError):
            covariances(np.ones((3, 2)), np.arange(9.0).reshape(3, 3))

    def test_row_mismatch_raises(self):
        """Test different numbers of rows."""
        with pytest.raises(InputError):
            covariances(np.ones((5, 2)), np.ones((4, 1)))

    def test_collinear_outcomes_raise(self):
        """Test a duplicated outcome column."""
        rng = np.random.default_rng(2)
        z = rng.standard_normal((40, 1))

        with pytest.raises(SingularOutcomeError):
            covariances(rng.standard_normal((40, 3)), np.hstack([z, z]))

    def test_constant_cepstra_raise_degenerate(self):
        """Test rank(G_f) = 0."""
        rng = np.random.default_rng(2)
        bundle = covariances(np.ones((20, 3)), rng.standard_normal((20, 2)))

        assert bundle.rank_f == 0
        with pytest.raises(DegenerateCcaError):
            cepstral_cca(bundle)

    def test_rank_deficient_cepstra(self):
        """Test Q = rank(G_f) when it is below P."""
        rng = np.random.default_rng(4)
        base = rng.standard_normal((50, 1))
        f = np.hstack([base, 2 * base, -base])

        result = cepstral_cca(covariances(f, rng.standard_normal((50, 3))))

        assert result.Q == 1


class TestMatrixHelpers:
    """Tests for matrix square roots and pseudo-inverses."""

    def test_sym_inverse_sqrt(self):
        """Test R m R = I."""
        rng = np.random.default_rng(0)
        a = rng.standard_normal((4, 4))
        m = a @ a.T + 4 * np.eye(4)

        root = sym_inverse_sqrt(m)

        np.testing.assert_allclose(root @ m @ root, np.eye(4), atol=1e-10)
        np.testing.assert_allclose(root, root.T)

    def test_sym_inverse_sqrt_rejects_indefinite(self):
        """Test a matrix with a negative eigenvalue."""
        with pytest.raises(MatrixError):
            sym_inverse_sqrt(np.diag([1.0, -1.0]))

    def test_sym_inverse_sqrt_rejects_asymmetric(self):
        """Test a non-symmetric matrix."""
        with pytest.raises(MatrixError):
            sym_inverse_sqrt(np.array([[2.0, 1.0], [0.0, 2.0]]))

    def test_pseudo_inverse_rank_one(self):
        """Test the Moore-Penrose conditions on a rank-one matrix."""
        v = np.array([[1.0], [2.0], [2.0]])
        m = v @ v.T

        inverse, rank = pseudo_inverse(m)

        assert rank == 1
        np.testing.assert_allclose(m @ inverse @ m, m, atol=1e-10)
        np.testing.assert_allclose(inverse @ m @ inverse, inverse, atol=1e-10)


class TestTruncationOrder:
    """Tests of the estimator on simulated panels at two truncation orders."""

    def test_k4_and_k8_agree(self):
        """Test that extra cepstral coefficients beyond the true order barely move rho."""
        design = SimulationDesign(N=100, T=100, replicates=6)
        by_order = {4: [], 8: []}
        for r in range(design.replicates):
            sample = simulate_panel(design, replicate_rng(design.seed, r))
            p = periodogram(sample.panel)
            for K in by_order:
                fhat = fit_panel(p, K).coefficients
                by_order[K].append(cepstral_cca(covariances(fhat, sample.outcomes)).correlations[:2])

        mean4, mean8 = np.mean(by_order[4], axis=0), np.mean(by_order[8], axis=0)

        assert abs(mean4[0] - 0.5) < 0.2
        np.testing.assert_allclose(mean8, mean4, atol=0.1)
