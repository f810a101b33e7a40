"""Random-Cramer simulation of panels with known cepstral CCA structure.

Each subject's log-spectrum is

    F_j(omega) = base_0 + xi_j0 + sum_k (base_k + xi_jk) sqrt(2) cos(2 pi k omega)

with latent offsets xi_j jointly Gaussian with the static outcomes Z_j. Given
F_j the series is Gaussian and stationary with spectral density exp(F_j).
A study repeats generate -> periodogram -> fit -> CCA -> error metrics over
independent replicates, each with its own RNG stream derived from the master
seed and the replicate index.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, PositiveFloat, PositiveInt, model_validator
from scipy import linalg

from src.cca import CcaResult, cepstral_cca, covariances, log_spectral_weight, population_cca
from src.cepstral import FitOptions, fit_panel, select_order
from src.config import FAILURE_LIMIT, OVERSAMPLE
from src.dataset import OutcomeMatrix, TimeSeriesPanel, panel_from_arrays
from src.exceptions import CepstralCcaError, ReplicateFailureError
from src.logger import logger
from src.spectral import fourier_grid, n_frequencies, periodogram


METRICS = ("A1", "A2", "B1", "B2", "rho1", "rho2", "rho3")

# Mean (sd) of squared error x 10^2 for the cepstral estimator, keyed by (N, T)
REFERENCE_CEP: Dict[Tuple[int, int], Dict[str, Tuple[float, float]]] = {
    (100, 100): {"A1": (0.27, 0.75), "A2": (0.79, 2.47), "B1": (1.28, 2.19), "B2": (3.32, 3.67),
                 "rho1": (0.57, 0.66), "rho2": (0.85, 1.07), "rho3": (1.81, 1.62)},
    (100, 50): {"A1": (0.57, 1.11), "A2": (1.67, 3.50), "B1": (1.30, 2.08), "B2": (3.45, 3.67),
                "rho1": (0.58, 0.68), "rho2": (0.84, 1.02), "rho3": (1.93, 1.68)},
    (100, 30): {"A1": (0.87, 0.83), "A2": (1.61, 2.38), "B1": (1.42, 2.21), "B2": (3.75, 4.03),
                "rho1": (0.54, 0.64), "rho2": (0.84, 1.09), "rho3": (1.97, 1.67)},
    (50, 100): {"A1": (0.65, 2.47), "A2": (0.98, 2.89), "B1": (2.54, 3.32), "B2": (5.64, 4.94),
                "rho1": (1.46, 1.68), "rho2": (1.85, 2.19), "rho3": (3.02, 2.74)},
    (50, 50): {"A1": (1.13, 2.48), "A2": (1.93, 3.71), "B1": (2.56, 3.38), "B2": (5.79, 4.92),
               "rho1": (1.48, 1.70), "rho2": (1.93, 2.18), "rho3": (3.25, 2.89)},
    (50, 30): {"A1": (1.39, 1.71), "A2": (1.84, 2.38), "B1": (2.67, 3.33), "B2": (5.85, 4.95),
               "rho1": (1.40, 1.73), "rho2": (1.99, 2.20), "rho3": (3.26, 2.94)},
}


class CrossCorrelation(BaseModel):
    """cor(xi_latent, Z_outcome), both indices zero-based."""
    model_config = ConfigDict(frozen=True)

    latent: int = Field(ge=0)
    outcome: int = Field(ge=0)
    value: float = Field(ge=-1.0, le=1.0)


class SimulationDesign(BaseModel):
    """Simulation setting; defaults give the four-coefficient, three-outcome design."""
    model_config = ConfigDict(frozen=True)

    N: PositiveInt = 100
    T: PositiveInt = 100
    replicates: PositiveInt = 500
    base_cepstrum: Tuple[float, ...] = (5.0, 1.0, 0.0, 0.0)
    latent_sd: PositiveFloat = 2.0
    outcome_variances: Tuple[PositiveFloat, ...] = (4.0, 4.0, 4.0)
    cross_cor: Tuple[CrossCorrelation, ...] = (
        CrossCorrelation(latent=2, outcome=0, value=0.5),
        CrossCorrelation(latent=3, outcome=1, value=0.25),
    )
    seed: int = 42
    oversample: PositiveInt = OVERSAMPLE

    @model_validator(mode="after")
    def _check_design(self) -> "SimulationDesign":
        if self.T < 4:
            raise ValueError(f"T must be at least 4, got {self.T}")
        if self.N < self.P + 1:
            raise ValueError(f"N must be at least P + 1 = {self.P + 1}, got {self.N}")
        for pair in self.cross_cor:
            if pair.latent >= self.L or pair.outcome >= self.P:
                raise ValueError(f"Cross-correlation index out of range: {pair}")
        try:
            linalg.cholesky(self.joint_covariance(), lower=True)
        except linalg.LinAlgError as e:
            raise ValueError("Implied joint covariance of (xi, Z) is not positive definite") from e
        return self

    @property
    def L(self) -> int:
        """Number of latent cepstral coefficients."""
        return len(self.base_cepstrum)

    @property
    def P(self) -> int:
        return len(self.outcome_variances)

    def joint_covariance(self) -> np.ndarray:
        """Covariance of (xi_0..xi_{L-1}, Z_1..Z_P)."""
        sd = np.concatenate([
            np.full(self.L, self.latent_sd),
            np.sqrt(np.asarray(self.outcome_variances, dtype=float)),
        ])
        correlation = np.eye(self.L + self.P)
        for pair in self.cross_cor:
            i, j = pair.latent, self.L + pair.outcome
            correlation[i, j] = correlation[j, i] = pair.value
        return correlation * np.outer(sd, sd)

    def null(self) -> "SimulationDesign":
        """Same design with every cross-correlation set to zero."""
        return self.model_copy(update={"cross_cor": ()})


def population_covariances(design: SimulationDesign, K: Optional[int] = None) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Exact (G_f, G_fZ, G_Z) of the design, cepstra truncated or zero-padded to K."""
    K = design.L if K is None else K
    joint = design.joint_covariance()
    L, P = design.L, design.P
    keep = min(K, L)
    gamma_f = np.zeros((K, K))
    gamma_f[:keep, :keep] = joint[:keep, :keep]
    gamma_fz = np.zeros((K, P))
    gamma_fz[:keep] = joint[:keep, L:]
    gamma_z = joint[L:, L:].copy()
    return gamma_f, gamma_fz, gamma_z


@dataclass(frozen=True)
class SimulationTruth:
    """Population canonical correlations and weights of a design."""
    correlations: np.ndarray
    cepstral_weights: np.ndarray
    outcome_weights: np.ndarray


def population_truth(design: SimulationDesign, K: Optional[int] = None) -> SimulationTruth:
    """Run the CCA algebra on the exact population covariances (no sampling)."""
    result = population_cca(*population_covariances(design, K))
    correlations = np.zeros(design.P)
    correlations[:result.Q] = result.correlations
    return SimulationTruth(
        correlations=correlations,
        cepstral_weights=result.cepstral_weights,
        outcome_weights=result.outcome_weights,
    )


@dataclass(frozen=True)
class SubjectDraw:
    """Latent offsets, assembled true cepstra and outcomes for n subjects."""
    xi: np.ndarray
    cepstrum: np.ndarray
    outcomes: np.ndarray


def draw_subjects(design: SimulationDesign, rng: np.random.Generator, n: Optional[int] = None) -> SubjectDraw:
    """Draw (xi_j, Z_j) jointly Gaussian for n subjects (design.N by default)."""
    n = design.N if n is None else n
    factor = linalg.cholesky(design.joint_covariance(), lower=True)
    draws = rng.standard_normal((n, design.L + design.P)) @ factor.T
    xi, outcomes = draws[:, :design.L], draws[:, design.L:]
    return SubjectDraw(
        xi=xi,
        cepstrum=np.asarray(design.base_cepstrum, dtype=float) + xi,
        outcomes=outcomes,
    )


def draw_subject(design: SimulationDesign, rng: np.random.Generator) -> SubjectDraw:
    """One subject: 1 x L offsets and cepstrum, 1 x P outcomes."""
    return draw_subjects(design, rng, 1)


def synthesize_series(
    true_cepstrum: np.ndarray,
    T: int,
    rng: np.random.Generator,
    oversample: int = OVERSAMPLE,
) -> np.ndarray:
    """Gaussian stationary series with spectral density exp(F) for each cepstrum row.

    The series is built circularly on T' = oversample * T points as

        X_t = sum_l theta_l sqrt(2/T') [a_l cos(2 pi l t/T') + b_l sin(2 pi l t/T')]
              + theta_0 g_0 / sqrt(T') [+ theta_N g_N (-1)^t / sqrt(T') for even T']

    over l = 1..floor((T'-1)/2), theta = exp(F(l/T')/2) and a_l, b_l, g_0, g_N
    standard normal, then the middle T samples are kept. With oversample = 1
    the periodogram at every retained frequency is exactly exp(F) times an
    exponential variable and Var X_t is the grid mean of exp(F).
    """
    cepstra = np.atleast_2d(np.asarray(true_cepstrum, dtype=float))
    if T < 4:
        raise ValueError(f"Series length must be at least 4, got {T}")
    n, n_coef = cepstra.shape
    long_T = int(oversample) * int(T)
    m = n_frequencies(long_T)
    omega = np.arange(long_T // 2 + 1) / float(long_T)
    basis = np.sqrt(2.0) * np.cos(2.0 * np.pi * np.multiply.outer(omega, np.arange(n_coef)))
    basis[:, 0] = 1.0
    theta = np.exp(0.5 * cepstra @ basis.T)

    a = rng.standard_normal((n, m))
    b = rng.standard_normal((n, m))
    coefficients = np.zeros((n, long_T), dtype=complex)
    coefficients[:, 1:m + 1] = theta[:, 1:m + 1] * np.sqrt(2.0 / long_T) * (a - 1j * b)
    coefficients[:, 0] = theta[:, 0] * rng.standard_normal(n) / np.sqrt(long_T)
    if long_T % 2 == 0:
        coefficients[:, long_T // 2] = theta[:, long_T // 2] * rng.standard_normal(n) / np.sqrt(long_T)
    # ifft carries a 1/T' factor
    full = long_T * np.fft.ifft(coefficients, axis=1).real
    start = (long_T - T) // 2
    series = full[:, start:start + T]
    return series[0] if np.ndim(true_cepstrum) == 1 else series


@dataclass(frozen=True)
class SimulatedReplicate:
    panel: TimeSeriesPanel
    outcomes: OutcomeMatrix
    draw: SubjectDraw


def simulate_panel(design: SimulationDesign, rng: np.random.Generator) -> SimulatedReplicate:
    """Draw one replicate panel with outcomes."""
    draw = draw_subjects(design, rng)
    series = synthesize_series(draw.cepstrum, design.T, rng, design.oversample)
    panel, outcomes = panel_from_arrays(
        series,
        draw.outcomes,
        sampling_note=f"simulated N={design.N} T={design.T}",
    )
    return SimulatedReplicate(panel=panel, outcomes=outcomes, draw=draw)


def replicate_rng(seed: int, replicate: int) -> np.random.Generator:
    """Independent RNG stream for one replicate."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(replicate,)))


def squared_errors(
    estimate: CcaResult,
    truth: SimulationTruth,
    grid: np.ndarray,
    n_weight_pairs: int = 2,
    spacing: Optional[float] = None,
) -> Dict[str, float]:
    """Squared errors of correlations and of the leading weight pairs.

    Weight functions for the log-spectrum are compared on `grid` as the
    Riemann sum spacing * sum (A_hat - A)^2, which approximates the integral
    over [0, 1/2] and does not grow with the grid size. `spacing` defaults
    to the grid step (1 for a single point). Outcome weights use the
    Euclidean norm. The sign of each estimated (A_q, B_q) pair is chosen to
    minimize its combined error. Correlations beyond Q count as zero.
    """
    if estimate.Q < n_weight_pairs:
        raise ValueError(f"Need at least {n_weight_pairs} canonical pairs, got Q={estimate.Q}")
    if spacing is None:
        steps = np.diff(np.asarray(grid, dtype=float))
        spacing = float(np.mean(steps)) if steps.size else 1.0
    errors: Dict[str, float] = {}
    for q in range(n_weight_pairs):
        a_hat = log_spectral_weight(estimate.cepstral_weights[q], grid)
        a_true = log_spectral_weight(truth.cepstral_weights[q], grid)
        b_hat = estimate.outcome_weights[q]
        b_true = truth.outcome_weights[q]
        best = None
        for sign in (1.0, -1.0):
            a_err = float(spacing * np.sum((sign * a_hat - a_true) ** 2))
            b_err = float(np.sum((sign * b_hat - b_true) ** 2))
            if best is None or a_err + b_err < best[0] + best[1]:
                best = (a_err, b_err)
        errors[f"A{q + 1}"], errors[f"B{q + 1}"] = best
    rho_hat = np.zeros(truth.correlations.size)
    count = min(estimate.Q, rho_hat.size)
    rho_hat[:count] = estimate.correlations[:count]
    for q, (r_hat, r_true) in enumerate(zip(rho_hat, truth.correlations)):
        errors[f"rho{q + 1}"] = float((r_hat - r_true) ** 2)
    return errors


@dataclass
class SimulationReport:
    """Aggregated squared errors (x 10^2) over the successful replicates."""
    summary: pd.DataFrame
    raw: pd.DataFrame
    failures: List[Tuple[int, str]]
    design: dict
    k_mode: str
    selected_k: Dict[int, int] = field(default_factory=dict)

    @property
    def n_success(self) -> int:
        return len(self.raw)

    @property
    def failure_rate(self) -> float:
        total = self.n_success + len(self.failures)
        return len(self.failures) / total if total else 0.0


def _run_replicate(
    replicate: int,
    design: SimulationDesign,
    truth: SimulationTruth,
    opts: FitOptions,
    k_mode: Union[str, int],
    k_range: Optional[Tuple[int, int]],
) -> Dict[str, float]:
    sample = simulate_panel(design, replicate_rng(design.seed, replicate))
    p = periodogram(sample.panel)
    if k_mode == "aic":
        fit_set = select_order(p, k_range, opts).selected_fit
    else:
        fit_set = fit_panel(p, int(k_mode), opts)
        if not fit_set.all_converged:
            raise CepstralCcaError(f"{len(fit_set.failures)} subject fit(s) did not converge")
    result = cepstral_cca(covariances(fit_set.coefficients, sample.outcomes))
    errors = squared_errors(result, truth, fourier_grid(design.T), spacing=1.0 / design.T)
    return {"replicate": replicate, "K": fit_set.K, **errors}


def run_study(
    design: SimulationDesign,
    opts: Optional[FitOptions] = None,
    k_mode: Union[str, int] = "aic",
    k_range: Optional[Tuple[int, int]] = None,
    threads: int = 1,
    failure_limit: float = FAILURE_LIMIT,
) -> SimulationReport:
    """Repeat the full estimation pipeline over design.replicates replicates.

    k_mode is "aic" (order selected per replicate) or a fixed K. Failed
    replicates are dropped and counted.

    Raises:
        ReplicateFailureError: If more than failure_limit of the replicates fail;
            the partial report is attached as `.report`
    """
    opts = opts or FitOptions()
    truth = population_truth(design)
    logger.info(
        f"Simulation study: N={design.N}, T={design.T}, replicates={design.replicates}, "
        f"K mode={k_mode}, seed={design.seed}"
    )

    def attempt(replicate: int):
        try:
            return _run_replicate(replicate, design, truth, opts, k_mode, k_range)
        except (CepstralCcaError, ValueError, linalg.LinAlgError) as e:
            logger.warning(f"Replicate {replicate} dropped: {e}")
            return (replicate, str(e))

    indices = range(design.replicates)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(attempt, indices))
    else:
        outcomes = [attempt(r) for r in indices]

    rows = [o for o in outcomes if isinstance(o, dict)]
    failures = [o for o in outcomes if not isinstance(o, dict)]
    raw = pd.DataFrame(rows, columns=["replicate", "K", *METRICS])
    scaled = raw[list(METRICS)].astype(float) * 100.0
    summary = pd.DataFrame({
        "mean": scaled.mean(axis=0),
        "sd": scaled.std(axis=0, ddof=1),
        "se": scaled.std(axis=0, ddof=1) / np.sqrt(max(len(raw), 1)),
    }).reindex(list(METRICS))
    summary.index.name = "metric"

    report = SimulationReport(
        summary=summary,
        raw=raw,
        failures=failures,
        design=design.model_dump(mode="json"),
        k_mode=str(k_mode),
        selected_k={int(k): int(c) for k, c in raw["K"].value_counts().sort_index().items()},
    )
    logger.info(
        f"Simulation finished: {report.n_success} replicate(s) kept, {len(failures)} dropped"
    )
    if report.failure_rate > failure_limit:
        error = ReplicateFailureError(
            f"{len(failures)} of {design.replicates} replicates failed "
            f"({report.failure_rate:.1%} > {failure_limit:.0%})"
        )
        error.report = report
        raise error
    return report


def report_table(report: SimulationReport) -> pd.DataFrame:
    """Error table: one row per metric with mean and sd (x 10^2).

    When the run matches a tabulated (N, T) setting the reference mean/sd and
    the relative deviation of the mean are added.
    """
    table = report.summary.copy()
    reference = REFERENCE_CEP.get((report.design["N"], report.design["T"]))
    if reference is not None:
        table["reference_mean"] = [reference[m][0] for m in table.index]
        table["reference_sd"] = [reference[m][1] for m in table.index]
        table["relative_diff"] = (table["mean"] - table["reference_mean"]) / table["reference_mean"]
    return table


def reference_check(report: SimulationReport, rel_tol: float = 0.4, n_se: float = 3.0) -> pd.DataFrame:
    """Per-metric pass/fail against the reference means.

    A metric passes when its mean is within rel_tol relative of the reference
    and within n_se Monte Carlo standard errors of it.

    Raises:
        KeyError: If the run's (N, T) has no reference values
    """
    key = (report.design["N"], report.design["T"])
    if key not in REFERENCE_CEP:
        raise KeyError(f"No reference values for N={key[0]}, T={key[1]}")
    table = report_table(report)
    diff = (table["mean"] - table["reference_mean"]).abs()
    table["passed"] = (table["relative_diff"].abs() <= rel_tol) & (diff <= n_se * table["se"])
    return table
