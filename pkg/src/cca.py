"""Plug-in canonical correlation analysis between cepstra and static outcomes.

With sample moments G_f (K x K), G_fZ (K x P) and G_Z (P x P), let
R = G_Z^{-1/2} and G_f^- the Moore-Penrose inverse of G_f. The q-th
eigenpair (eta_q, v_q) of the P x P matrix R G_fZ' G_f^- G_fZ R gives

    rho_q = sqrt(eta_q)
    a_q   = rho_q^{-1} G_f^- G_fZ R v_q
    B_q   = R v_q

and the log-spectral weight function A_q(omega) is the cosine series with
coefficients a_q.
"""

import warnings
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple, Union

import numpy as np
from scipy import linalg

from src.config import EIGEN_GAP, OUTCOME_CONDITION_LIMIT, RANK_TOL, ZERO_CORRELATION
from src.dataset import OutcomeMatrix
from src.exceptions import (
    DegenerateCcaError,
    InputError,
    MatrixError,
    NumericalWarning,
    SingularOutcomeError,
)
from src.logger import logger
from src.spectral import cosine_series


@dataclass(frozen=True)
class CovarianceBundle:
    """Sample covariances (N-1 denominator) of fitted cepstra and outcomes."""
    gamma_f: np.ndarray
    gamma_fz: np.ndarray
    gamma_z: np.ndarray
    mean_f: np.ndarray
    mean_z: np.ndarray
    rank_f: int
    rank_tol: float = RANK_TOL

    @property
    def K(self) -> int:
        return self.gamma_f.shape[0]

    @property
    def P(self) -> int:
        return self.gamma_z.shape[0]


@dataclass(frozen=True)
class CcaResult:
    """Canonical correlations and weights, pairs in descending correlation order."""
    correlations: np.ndarray
    cepstral_weights: np.ndarray
    outcome_weights: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    identified: np.ndarray
    tied: np.ndarray
    rank_tol: float = RANK_TOL

    @property
    def Q(self) -> int:
        return self.correlations.shape[0]

    @property
    def K(self) -> int:
        return self.cepstral_weights.shape[1]

    @property
    def P(self) -> int:
        return self.outcome_weights.shape[1]


def _symmetrize(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + m.T)


def _asymmetry(m: np.ndarray) -> float:
    scale = max(1.0, float(np.max(np.abs(m)))) if m.size else 1.0
    return float(np.max(np.abs(m - m.T))) / scale if m.size else 0.0


def _numerical_rank(m: np.ndarray, rel_tol: float) -> int:
    eigenvalues = linalg.eigvalsh(m)
    top = float(eigenvalues.max()) if eigenvalues.size else 0.0
    if top <= 0.0:
        return 0
    return int(np.sum(eigenvalues > rel_tol * top))


def _outcome_values(z: Union[OutcomeMatrix, np.ndarray]) -> np.ndarray:
    values = z.values if isinstance(z, OutcomeMatrix) else np.asarray(z, dtype=float)
    return values[:, None] if values.ndim == 1 else values


def covariances(
    fhat: np.ndarray,
    z: Union[OutcomeMatrix, np.ndarray],
    rank_tol: float = RANK_TOL,
) -> CovarianceBundle:
    """Sample moments of fitted cepstra and outcomes.

    Raises:
        InputError: If N < 2, N < P + 1, or row counts differ
        SingularOutcomeError: If the outcome covariance has condition number > 1e12
    """
    fhat = np.asarray(fhat, dtype=float)
    if fhat.ndim == 1:
        fhat = fhat[:, None]
    values = _outcome_values(z)
    n, p = values.shape
    if fhat.shape[0] != n:
        raise InputError(f"{fhat.shape[0]} cepstral rows for {n} outcome rows")
    if n < 2 or n < p + 1:
        raise InputError(f"Need N >= max(2, P + 1) subjects, got N={n}, P={p}")

    mean_f = fhat.mean(axis=0)
    mean_z = values.mean(axis=0)
    fc = fhat - mean_f
    zc = values - mean_z
    gamma_f = _symmetrize(fc.T @ fc / (n - 1))
    gamma_fz = fc.T @ zc / (n - 1)
    gamma_z = _symmetrize(zc.T @ zc / (n - 1))

    eigenvalues_z = linalg.eigvalsh(gamma_z)
    if eigenvalues_z[0] <= 0.0 or eigenvalues_z[-1] / eigenvalues_z[0] > OUTCOME_CONDITION_LIMIT:
        raise SingularOutcomeError(
            "Outcome covariance is numerically singular; standardize the outcomes "
            "(--standardize) or remove collinear/constant variables"
        )

    rank_f = _numerical_rank(gamma_f, rank_tol)
    logger.debug(f"Covariances: N={n}, K={fhat.shape[1]}, P={p}, rank(G_f)={rank_f}")
    return CovarianceBundle(
        gamma_f=gamma_f,
        gamma_fz=gamma_fz,
        gamma_z=gamma_z,
        mean_f=mean_f,
        mean_z=mean_z,
        rank_f=rank_f,
        rank_tol=rank_tol,
    )


def population_bundle(
    gamma_f: np.ndarray,
    gamma_fz: np.ndarray,
    gamma_z: np.ndarray,
    rank_tol: float = RANK_TOL,
) -> CovarianceBundle:
    """Bundle built from known population covariances (zero means)."""
    gamma_f = _symmetrize(np.asarray(gamma_f, dtype=float))
    gamma_z = _symmetrize(np.asarray(gamma_z, dtype=float))
    gamma_fz = np.asarray(gamma_fz, dtype=float)
    return CovarianceBundle(
        gamma_f=gamma_f,
        gamma_fz=gamma_fz,
        gamma_z=gamma_z,
        mean_f=np.zeros(gamma_f.shape[0]),
        mean_z=np.zeros(gamma_z.shape[0]),
        rank_f=_numerical_rank(gamma_f, rank_tol),
        rank_tol=rank_tol,
    )


def sym_inverse_sqrt(m: np.ndarray) -> np.ndarray:
    """Symmetric R with R m R = I for a symmetric positive definite m.

    Raises:
        MatrixError: If m is not symmetric positive definite
    """
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise MatrixError(f"Expected a square matrix, got shape {m.shape}")
    if _asymmetry(m) > 1e-10:
        raise MatrixError("Matrix is not symmetric")
    eigenvalues, vectors = linalg.eigh(_symmetrize(m))
    if eigenvalues[0] <= 0.0:
        raise MatrixError(f"Matrix is not positive definite (smallest eigenvalue {eigenvalues[0]:.3e})")
    return _symmetrize((vectors / np.sqrt(eigenvalues)) @ vectors.T)


def pseudo_inverse(m: np.ndarray, rel_tol: float = RANK_TOL) -> Tuple[np.ndarray, int]:
    """Moore-Penrose inverse of a symmetric PSD matrix and its numerical rank.

    Eigenvalues below rel_tol * (largest eigenvalue) are treated as zero.
    """
    m = _symmetrize(np.asarray(m, dtype=float))
    eigenvalues, vectors = linalg.eigh(m)
    top = float(eigenvalues.max()) if eigenvalues.size else 0.0
    if top <= 0.0:
        return np.zeros_like(m), 0
    keep = eigenvalues > rel_tol * top
    kept = vectors[:, keep]
    inverse = (kept / eigenvalues[keep]) @ kept.T
    return _symmetrize(inverse), int(keep.sum())


def cepstral_cca(bundle: CovarianceBundle) -> CcaResult:
    """Canonical correlations and weights from a covariance bundle.

    Q = min(P, rank(G_f)) pairs are returned. Pairs with rho <= 1e-8 are kept
    but flagged as not identified. Each (a_q, B_q) pair is flipped jointly so
    that the largest-magnitude entry of B_q is positive.

    Raises:
        DegenerateCcaError: If rank(G_f) = 0
    """
    q_pairs = min(bundle.P, bundle.rank_f)
    if q_pairs < 1:
        raise DegenerateCcaError(
            "Cepstral covariance has rank 0: fitted cepstra do not vary across subjects"
        )

    gf_pinv, _ = pseudo_inverse(bundle.gamma_f, bundle.rank_tol)
    root = sym_inverse_sqrt(bundle.gamma_z)
    cross = gf_pinv @ bundle.gamma_fz @ root
    target = _symmetrize(root @ bundle.gamma_fz.T @ cross)
    eigenvalues, vectors = linalg.eigh(target)
    order = np.argsort(eigenvalues)[::-1][:q_pairs]
    eigenvalues, vectors = eigenvalues[order], vectors[:, order]

    outside = (eigenvalues < -1e-8) | (eigenvalues > 1.0 + 1e-8)
    if np.any(outside):
        message = f"CCA eigenvalues outside [0, 1]: {eigenvalues[outside]}"
        if np.any((eigenvalues < -1e-6) | (eigenvalues > 1.0 + 1e-6)):
            logger.warning(message)
        warnings.warn(message, NumericalWarning, stacklevel=2)
    clipped = np.clip(eigenvalues, 0.0, 1.0)
    correlations = np.sqrt(clipped)

    outcome_weights = (root @ vectors).T
    cepstral_weights = np.zeros((q_pairs, bundle.K))
    for q in range(q_pairs):
        if correlations[q] > 0.0:
            cepstral_weights[q] = cross @ vectors[:, q] / correlations[q]
        lead = np.argmax(np.abs(outcome_weights[q]))
        if outcome_weights[q, lead] < 0.0:
            outcome_weights[q] *= -1.0
            cepstral_weights[q] *= -1.0
            vectors[:, q] *= -1.0

    identified = correlations > ZERO_CORRELATION
    gaps = np.abs(np.diff(eigenvalues)) < EIGEN_GAP
    tied = np.zeros(q_pairs, dtype=bool)
    tied[:-1] |= gaps
    tied[1:] |= gaps
    if not identified.all():
        logger.warning(
            f"{int((~identified).sum())} canonical pair(s) with correlation <= "
            f"{ZERO_CORRELATION:g} are not identified"
        )
    logger.info(f"Canonical correlations: {np.round(correlations, 4).tolist()}")
    return CcaResult(
        correlations=correlations,
        cepstral_weights=cepstral_weights,
        outcome_weights=outcome_weights,
        eigenvalues=eigenvalues,
        eigenvectors=vectors.T,
        identified=identified,
        tied=tied,
        rank_tol=bundle.rank_tol,
    )


def log_spectral_weight(a_q: Sequence[float], grid: Sequence[float]) -> np.ndarray:
    """A_q(omega) = a_q0 + sum_k a_qk sqrt(2) cos(2 pi omega k)."""
    return cosine_series(a_q, grid)


def canonical_scores(
    result: CcaResult,
    fhat: np.ndarray,
    z: Union[OutcomeMatrix, np.ndarray],
    bundle: Optional[CovarianceBundle] = None,
) -> np.ndarray:
    """N x Q x 2 array of canonical variables on mean-centered data.

    [:, q, 0] is the cepstral score a_q'(f_j - mean f), [:, q, 1] the
    outcome score B_q'(Z_j - mean Z). Means come from `bundle` when given.
    """
    fhat = np.asarray(fhat, dtype=float)
    if fhat.ndim == 1:
        fhat = fhat[:, None]
    values = _outcome_values(z)
    if fhat.shape[1] != result.K or values.shape[1] != result.P:
        raise InputError(
            f"Scores need K={result.K} cepstral and P={result.P} outcome columns, "
            f"got {fhat.shape[1]} and {values.shape[1]}"
        )
    mean_f = bundle.mean_f if bundle is not None else fhat.mean(axis=0)
    mean_z = bundle.mean_z if bundle is not None else values.mean(axis=0)
    scores = np.empty((fhat.shape[0], result.Q, 2))
    scores[:, :, 0] = (fhat - mean_f) @ result.cepstral_weights.T
    scores[:, :, 1] = (values - mean_z) @ result.outcome_weights.T
    return scores


def population_cca(
    gamma_f: np.ndarray,
    gamma_fz: np.ndarray,
    gamma_z: np.ndarray,
    rank_tol: float = RANK_TOL,
) -> CcaResult:
    """CCA of known population covariances, without sampling."""
    return cepstral_cca(population_bundle(gamma_f, gamma_fz, gamma_z, rank_tol))


def result_to_dict(result: CcaResult, variable_names: Optional[Sequence[str]] = None) -> dict:
    """JSON-ready view of a CcaResult."""
    names = list(variable_names) if variable_names is not None else [f"z{p + 1}" for p in range(result.P)]
    return {
        "Q": result.Q,
        "K": result.K,
        "P": result.P,
        "variable_names": names,
        "correlations": result.correlations.tolist(),
        "eigenvalues": result.eigenvalues.tolist(),
        "cepstral_weights": result.cepstral_weights.tolist(),
        "outcome_weights": result.outcome_weights.tolist(),
        "identified": result.identified.tolist(),
        "tied": result.tied.tolist(),
        "rank_tol": result.rank_tol,
    }
