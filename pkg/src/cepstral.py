"""Maximum Whittle-likelihood estimation of truncated cepstral coefficients.

For one subject with periodogram row y and cosine design C (rows C_l),

    L(f) = sum_l ( y_l exp(-C_l'f) + C_l'f )
    U(f) = sum_l ( 1 - y_l exp(-C_l'f) ) C_l
    J    = sum_l C_l C_l'

Fisher scoring iterates f <- f - J^{-1} U(f) from the log-periodogram least
squares start. J does not depend on f or on the data, so it is factored once
per (T, K) and shared by every subject. Subjects of a panel are iterated
together as rows of one matrix; each row follows exactly the single-subject
update, step halving and stopping rule.
"""

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, PositiveFloat, PositiveInt
from scipy import linalg

from src.config import (
    EXPONENT_CLAMP,
    MAX_ITERATIONS,
    MAX_K,
    MAX_STEP_HALVINGS,
    NLL_REL_TOL,
    SCORE_TOL_PER_FREQ,
)
from src.exceptions import DesignRankError, NoValidOrderError, NumericalWarning, OrderError
from src.logger import logger
from src.spectral import (
    CosineDesign,
    PeriodogramSet,
    adjusted_log_periodogram,
    cosine_design,
    cosine_series,
    n_frequencies,
)


class FitOptions(BaseModel):
    """Stopping rule for Fisher scoring.

    A fit converges when ||U||_2 <= score_tolerance * (number of frequencies)
    or when the accepted decrease of L is <= nll_tolerance * (1 + |L|).
    """
    model_config = ConfigDict(frozen=True)

    max_iterations: PositiveInt = MAX_ITERATIONS
    score_tolerance: PositiveFloat = SCORE_TOL_PER_FREQ
    nll_tolerance: PositiveFloat = NLL_REL_TOL
    max_halvings: PositiveInt = MAX_STEP_HALVINGS

    def score_threshold(self, n_freqs: int) -> float:
        return self.score_tolerance * n_freqs


@dataclass(frozen=True)
class CepstralFit:
    """Result of fitting one subject."""
    coefficients: np.ndarray
    nll: float
    iterations: int
    converged: bool
    score_norm: float
    clamped: bool = False


def _whittle_terms(
    f: np.ndarray,
    y: np.ndarray,
    rows: np.ndarray,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Row-wise L, U and clamping flags for coefficient rows f (n x K) and periodograms y (n x m)."""
    eta = f @ rows.T
    clipped = np.clip(eta, -EXPONENT_CLAMP, EXPONENT_CLAMP)
    ratio = y * np.exp(-clipped)
    nll = np.sum(ratio + eta, axis=1)
    score = (1.0 - ratio) @ rows
    clamped = np.any(clipped != eta, axis=1)
    return nll, score, clamped


def _check_dimensions(f: np.ndarray, y: np.ndarray, design: CosineDesign) -> None:
    if f.shape != (design.K,):
        raise ValueError(f"Coefficient vector has shape {f.shape}, expected ({design.K},)")
    if y.shape != (design.rows.shape[0],):
        raise ValueError(
            f"Periodogram row has shape {y.shape}, expected ({design.rows.shape[0]},)"
        )


def _warn_clamped(where: str) -> None:
    warnings.warn(
        f"{where}: exponent clamped to +/-{EXPONENT_CLAMP:g}",
        NumericalWarning,
        stacklevel=3,
    )


def _single_terms(f, y, design: CosineDesign, where: str) -> Tuple[float, np.ndarray]:
    f, y = np.asarray(f, dtype=float), np.asarray(y, dtype=float)
    _check_dimensions(f, y, design)
    nll, score, clamped = _whittle_terms(f[None, :], y[None, :], design.rows)
    if clamped[0]:
        _warn_clamped(where)
    return float(nll[0]), score[0]


def whittle_nll(f: Sequence[float], y: Sequence[float], design: CosineDesign) -> float:
    """L(f) = sum_l ( y_l exp(-C_l'f) + C_l'f ).

    Exponents are clamped to +/-700 before exponentiation; a NumericalWarning
    is emitted when that happens.
    """
    return _single_terms(f, y, design, "whittle_nll")[0]


def whittle_score(f: Sequence[float], y: Sequence[float], design: CosineDesign) -> np.ndarray:
    """U(f) = sum_l ( 1 - y_l exp(-C_l'f) ) C_l, the gradient of whittle_nll."""
    return _single_terms(f, y, design, "whittle_score")[1]


def fisher_information(design: CosineDesign) -> np.ndarray:
    """J = sum_l C_l C_l' (the positive form of the expected Hessian).

    Raises:
        DesignRankError: If J is not positive definite
    """
    information = design.rows.T @ design.rows
    try:
        linalg.cholesky(information, lower=True)
    except linalg.LinAlgError as e:
        raise DesignRankError(
            f"Fisher information is singular for T={design.T}, K={design.K}"
        ) from e
    return information


class FisherScorer:
    """Cosine design with its Cholesky-factored information matrix."""

    def __init__(self, design: CosineDesign):
        self.design = design
        self.information = fisher_information(design)
        self._factor = linalg.cho_factor(self.information, lower=True)

    def solve(self, scores: np.ndarray) -> np.ndarray:
        """J^{-1} U for each row of `scores`."""
        return linalg.cho_solve(self._factor, scores.T).T


@lru_cache(maxsize=256)
def fisher_scorer(T: int, K: int) -> FisherScorer:
    """Shared, read-only scorer for a given (T, K)."""
    logger.debug(f"Factoring Fisher information for T={T}, K={K}")
    return FisherScorer(cosine_design(T, K))


def _least_squares_rows(y: np.ndarray, design: CosineDesign, floor: Optional[float]) -> np.ndarray:
    log_y = adjusted_log_periodogram(y, floor)
    solution, _, rank, _ = linalg.lstsq(design.rows, log_y.T)
    if rank < design.K:
        raise DesignRankError(f"Cosine design has rank {rank} < K={design.K}")
    return solution.T


def init_least_squares(
    y: Sequence[float],
    design: CosineDesign,
    floor: Optional[float] = None,
) -> np.ndarray:
    """Least squares regression of log(max(Y, floor)) + gamma on the cosine design.

    Raises:
        DesignRankError: If the design is rank deficient
    """
    y = np.asarray(y, dtype=float)
    if y.shape != (design.rows.shape[0],):
        raise ValueError(f"Periodogram row has shape {y.shape}, expected ({design.rows.shape[0]},)")
    return _least_squares_rows(y[None, :], design, floor)[0]


def _fisher_scoring(y: np.ndarray, scorer: FisherScorer, opts: FitOptions) -> List[CepstralFit]:
    """Fisher scoring for every row of y (n x m) at once.

    A full step that increases L is halved up to opts.max_halvings times; a
    row with no descent left is at its optimum to floating point resolution.
    Once a stopping criterion is met one more step is taken, kept unless it
    raises L by more than the likelihood tolerance, so the returned point sits
    on the update map's fixed point.
    """
    design = scorer.design
    rows = design.rows
    n = y.shape[0]
    threshold = opts.score_threshold(rows.shape[0])

    f = _least_squares_rows(y, design, None)
    nll, score, clamped = _whittle_terms(f, y, rows)
    active = np.ones(n, dtype=bool)
    converged = np.zeros(n, dtype=bool)
    iterations = np.zeros(n, dtype=int)

    for iteration in range(1, opts.max_iterations + 1):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        iterations[idx] = iteration
        small_score = np.linalg.norm(score[idx], axis=1) <= threshold
        step = scorer.solve(score[idx])

        scale = np.ones(idx.size)
        pending = np.ones(idx.size, dtype=bool)
        new_f = f[idx].copy()
        new_nll = nll[idx].copy()
        new_score = score[idx].copy()
        new_clamped = clamped[idx].copy()
        for _ in range(opts.max_halvings + 1):
            p = np.flatnonzero(pending)
            candidate = f[idx[p]] - scale[p, None] * step[p]
            c_nll, c_score, c_clamped = _whittle_terms(candidate, y[idx[p]], rows)
            ok = c_nll <= nll[idx[p]]
            accepted = p[ok]
            new_f[accepted] = candidate[ok]
            new_nll[accepted] = c_nll[ok]
            new_score[accepted] = c_score[ok]
            new_clamped[accepted] |= c_clamped[ok]
            pending[accepted] = False
            scale[p[~ok]] *= 0.5
            if not pending.any():
                break

        # No descent left within floating point resolution
        stuck = idx[pending]
        converged[stuck] = True
        active[stuck] = False

        moved = ~pending
        change = nll[idx[moved]] - new_nll[moved]
        f[idx[moved]] = new_f[moved]
        nll[idx[moved]] = new_nll[moved]
        score[idx[moved]] = new_score[moved]
        clamped[idx[moved]] = new_clamped[moved]
        done = small_score[moved] | (change <= opts.nll_tolerance * (1.0 + np.abs(new_nll[moved])))
        finished = idx[moved][done]
        converged[finished] = True
        active[finished] = False

    polish = np.flatnonzero(converged)
    if polish.size:
        candidate = f[polish] - scorer.solve(score[polish])
        c_nll, c_score, c_clamped = _whittle_terms(candidate, y[polish], rows)
        # Rounding noise in L dominates this close to the optimum
        ok = c_nll <= nll[polish] + opts.nll_tolerance * (1.0 + np.abs(nll[polish]))
        keep = polish[ok]
        f[keep], nll[keep], score[keep] = candidate[ok], c_nll[ok], c_score[ok]
        clamped[keep] |= c_clamped[ok]

    score_norm = np.linalg.norm(score, axis=1)
    if clamped.any():
        _warn_clamped("fit_cepstrum")
    if not converged.all():
        logger.warning(
            f"Fisher scoring did not converge in {opts.max_iterations} iterations for "
            f"{int((~converged).sum())} of {n} subject(s) (K={design.K})"
        )
    return [
        CepstralFit(
            coefficients=f[j].copy(),
            nll=float(nll[j]),
            iterations=int(iterations[j]),
            converged=bool(converged[j]),
            score_norm=float(score_norm[j]),
            clamped=bool(clamped[j]),
        )
        for j in range(n)
    ]


def fit_cepstrum(
    y: Sequence[float],
    design: CosineDesign,
    opts: Optional[FitOptions] = None,
    scorer: Optional[FisherScorer] = None,
) -> CepstralFit:
    """Minimize the negative log-Whittle likelihood of one subject by Fisher scoring.

    Hitting the iteration limit returns converged=False with diagnostics.
    """
    opts = opts or FitOptions()
    y = np.asarray(y, dtype=float)
    if y.shape != (design.rows.shape[0],):
        raise ValueError(f"Periodogram row has shape {y.shape}, expected ({design.rows.shape[0]},)")
    if scorer is None or scorer.design is not design:
        scorer = FisherScorer(design)
    return _fisher_scoring(y[None, :], scorer, opts)[0]


def reconstruct_log_spectrum(f: Sequence[float], grid: Sequence[float]) -> np.ndarray:
    """F(omega) = f_0 + sum_k f_k sqrt(2) cos(2 pi omega k)."""
    return cosine_series(f, grid)


@dataclass(frozen=True)
class CepstralFitSet:
    """Per-subject fits of one panel at a common truncation order K."""
    T: int
    K: int
    subjects: Tuple[str, ...]
    fits: Tuple[CepstralFit, ...]

    @property
    def coefficients(self) -> np.ndarray:
        """N x K matrix of estimated cepstra."""
        return np.vstack([fit.coefficients for fit in self.fits])

    @property
    def total_nll(self) -> float:
        return float(np.sum([fit.nll for fit in self.fits]))

    @property
    def failures(self) -> List[str]:
        return [s for s, fit in zip(self.subjects, self.fits) if not fit.converged]

    @property
    def all_converged(self) -> bool:
        return not self.failures

    def log_spectra(self, grid: Sequence[float]) -> np.ndarray:
        """N x len(grid) matrix of estimated subject log-spectra."""
        return np.vstack([reconstruct_log_spectrum(fit.coefficients, grid) for fit in self.fits])

    def coefficient_frame(self) -> pd.DataFrame:
        """Long table subject,k,coefficient."""
        return pd.DataFrame({
            "subject": np.repeat(list(self.subjects), self.K),
            "k": np.tile(np.arange(self.K), len(self.subjects)),
            "coefficient": self.coefficients.reshape(-1),
        })

    def diagnostics_frame(self) -> pd.DataFrame:
        """Table subject,converged,iterations,nll,score_norm."""
        return pd.DataFrame({
            "subject": list(self.subjects),
            "converged": [fit.converged for fit in self.fits],
            "iterations": [fit.iterations for fit in self.fits],
            "nll": [fit.nll for fit in self.fits],
            "score_norm": [fit.score_norm for fit in self.fits],
        })


def fit_panel(
    p: PeriodogramSet,
    K: int,
    opts: Optional[FitOptions] = None,
    threads: int = 1,
) -> CepstralFitSet:
    """Fit every subject of a periodogram set at order K.

    With threads > 1 the subjects are split into contiguous blocks fitted on a
    thread pool; results are returned in subject order either way.
    """
    opts = opts or FitOptions()
    scorer = fisher_scorer(p.T, K)
    values = np.asarray(p.values, dtype=float)

    if threads > 1 and p.N > 1:
        blocks = np.array_split(values, min(threads, p.N))
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = pool.map(lambda block: _fisher_scoring(block, scorer, opts), blocks)
            fits = tuple(fit for part in parts for fit in part)
    else:
        fits = tuple(_fisher_scoring(values, scorer, opts))

    subjects = p.subjects or tuple(f"s{j + 1:03d}" for j in range(p.N))
    fit_set = CepstralFitSet(T=p.T, K=K, subjects=tuple(subjects), fits=fits)
    logger.debug(
        f"Fitted {p.N} subject(s) at K={K}: total nll={fit_set.total_nll:.6f}, "
        f"non-converged={len(fit_set.failures)}"
    )
    return fit_set


@dataclass(frozen=True)
class OrderSelection:
    """AIC-selected truncation order and the full C(k) table."""
    selected_k: int
    table: pd.DataFrame
    fits: Dict[int, CepstralFitSet] = field(repr=False)

    @property
    def selected_fit(self) -> CepstralFitSet:
        return self.fits[self.selected_k]

    def aic_frame(self) -> pd.DataFrame:
        """Table k,aic as exported."""
        return self.table[["k", "aic"]]


def default_k_range(T: int) -> Tuple[int, int]:
    """1..min(MAX_K, floor((T-1)/2))."""
    return 1, min(MAX_K, n_frequencies(T))


def select_order(
    p: PeriodogramSet,
    k_range: Optional[Tuple[int, int]] = None,
    opts: Optional[FitOptions] = None,
    threads: int = 1,
) -> OrderSelection:
    """Choose K by minimizing C(k) = sum_j L_jk(f_j) + 2 N k.

    Orders at which any subject fails to converge are flagged and skipped.
    Ties go to the smaller k.

    Raises:
        OrderError: If k_range is outside [1, floor((T-1)/2)]
        NoValidOrderError: If every candidate order was flagged
    """
    lo, hi = k_range or default_k_range(p.T)
    m = n_frequencies(p.T)
    if not 1 <= lo <= hi <= m:
        raise OrderError(f"k-range {lo}:{hi} must lie within 1..{m} for T={p.T}")

    rows = []
    fits = {}
    best_k, best_aic = None, np.inf
    for k in range(lo, hi + 1):
        fit_set = fit_panel(p, k, opts, threads)
        fits[k] = fit_set
        aic = fit_set.total_nll + 2.0 * p.N * k
        flagged = not fit_set.all_converged
        rows.append({"k": k, "aic": aic, "n_failed": len(fit_set.failures), "flagged": flagged})
        if flagged:
            logger.warning(f"K={k} flagged: {len(fit_set.failures)} subject fit(s) did not converge")
            continue
        if aic < best_aic:
            best_k, best_aic = k, aic

    if best_k is None:
        raise NoValidOrderError(f"No order in {lo}:{hi} converged for every subject")
    logger.debug(f"AIC selected K={best_k} over k-range {lo}:{hi}")
    return OrderSelection(selected_k=best_k, table=pd.DataFrame(rows), fits=fits)
