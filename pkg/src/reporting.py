"""CSV and JSON outputs of spectra, fits, CCA and simulation runs.

Everything written here is plain CSV (pandas) or JSON (pydantic) so that the
results can be plotted with any external tool. No timestamps are written:
identical inputs give byte-identical files.
"""

import json
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
from pydantic import BaseModel

from src.cca import CcaResult, log_spectral_weight, result_to_dict
from src.cepstral import CepstralFitSet, FitOptions, OrderSelection
from src.dataset import OutcomeMatrix
from src.logger import logger
from src.simulate import SimulationReport, report_table
from src.spectral import periodogram_frame


class CcaReport(BaseModel):
    """JSON report of one cca run."""
    N: int
    T: int
    K: int
    P: int
    Q: int
    k_selection: str
    standardized: bool
    variable_names: List[str]
    correlations: List[float]
    eigenvalues: List[float]
    cepstral_weights: List[List[float]]
    outcome_weights: List[List[float]]
    identified: List[bool]
    tied: List[bool]
    rank_tol: float
    failed_subjects: List[str] = []


class MetricSummary(BaseModel):
    """Squared-error summary of one metric, scaled by 10^2."""
    mean: Optional[float] = None
    sd: Optional[float] = None
    se: Optional[float] = None
    reference_mean: Optional[float] = None
    reference_sd: Optional[float] = None
    relative_diff: Optional[float] = None
    passed: Optional[bool] = None


class SimulationSummary(BaseModel):
    """JSON report of one simulate run."""
    design: dict
    k_mode: str
    replicates_kept: int
    replicates_failed: int
    failure_rate: float
    selected_k: Dict[int, int]
    metrics: Dict[str, MetricSummary]
    failures: List[Dict[str, str]] = []


class RunManifest(BaseModel):
    """Every effective option of a run; enough to re-run it."""
    command: str
    config: dict
    fit_options: dict
    versions: Dict[str, str]


def package_versions() -> Dict[str, str]:
    """Versions of the numerical stack, recorded in manifests."""
    import pydantic
    import scipy

    from src import __version__

    return {
        "cepstral_cca": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "pandas": pd.__version__,
        "pydantic": pydantic.VERSION,
    }


def _write_json(model: BaseModel, path: Path) -> Path:
    path.write_text(model.model_dump_json(indent=2) + "\n", encoding="utf-8")
    logger.debug(f"Wrote {path}")
    return path


def _write_csv(frame: pd.DataFrame, path: Path) -> Path:
    frame.to_csv(path, index=False)
    logger.debug(f"Wrote {path}")
    return path


def write_manifest(
    out_dir: Path,
    command: str,
    config: dict,
    fit_options: FitOptions,
) -> Path:
    """Write manifest.json into out_dir."""
    manifest = RunManifest(
        command=command,
        config=config,
        fit_options=fit_options.model_dump(),
        versions=package_versions(),
    )
    return _write_json(manifest, Path(out_dir) / "manifest.json")


def read_manifest(path: Path) -> RunManifest:
    """Load a manifest written by write_manifest.

    Raises:
        FileNotFoundError: If the manifest does not exist
        ValueError: If the file is not a valid manifest
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Manifest not found: {path}")
    try:
        return RunManifest.model_validate(json.loads(path.read_text(encoding="utf-8")))
    except json.JSONDecodeError as e:
        raise ValueError(f"{path}: not valid JSON ({e})") from e


def write_spectra(
    out_dir: Path,
    subjects: Sequence[str],
    freqs: np.ndarray,
    values: np.ndarray,
    adjusted: np.ndarray,
    sampling_rate: Optional[float] = None,
) -> List[Path]:
    """periodogram.csv and adjusted_log_periodogram.csv in long format."""
    out_dir = Path(out_dir)
    return [
        _write_csv(periodogram_frame(subjects, freqs, values, sampling_rate), out_dir / "periodogram.csv"),
        _write_csv(
            periodogram_frame(subjects, freqs, adjusted, sampling_rate),
            out_dir / "adjusted_log_periodogram.csv",
        ),
    ]


def write_log_spectra(
    out_dir: Path,
    fit_set: CepstralFitSet,
    grid: np.ndarray,
    sampling_rate: Optional[float] = None,
) -> Path:
    """log_spectra.csv: estimated subject log-spectra on the grid."""
    frame = periodogram_frame(fit_set.subjects, grid, fit_set.log_spectra(grid), sampling_rate)
    return _write_csv(frame, Path(out_dir) / "log_spectra.csv")


def write_fit(out_dir: Path, fit_set: CepstralFitSet) -> List[Path]:
    """coefficients.csv and fit_diagnostics.csv."""
    out_dir = Path(out_dir)
    return [
        _write_csv(fit_set.coefficient_frame(), out_dir / "coefficients.csv"),
        _write_csv(fit_set.diagnostics_frame(), out_dir / "fit_diagnostics.csv"),
    ]


def write_aic(out_dir: Path, selection: OrderSelection) -> Path:
    """aic.csv: the C(k) table with failure counts."""
    return _write_csv(selection.table, Path(out_dir) / "aic.csv")


def weight_function_frame(
    result: CcaResult,
    grid: np.ndarray,
    sampling_rate: Optional[float] = None,
) -> pd.DataFrame:
    """Long table q,omega[,omega_hz],value of the log-spectral weight functions."""
    frames = []
    for q in range(result.Q):
        frame = pd.DataFrame({"q": q + 1, "omega": grid})
        if sampling_rate is not None:
            frame["omega_hz"] = grid * sampling_rate
        frame["value"] = log_spectral_weight(result.cepstral_weights[q], grid)
        frames.append(frame)
    return pd.concat(frames, ignore_index=True)


def write_cca(
    out_dir: Path,
    result: CcaResult,
    fit_set: CepstralFitSet,
    outcomes: OutcomeMatrix,
    scores: np.ndarray,
    grid: np.ndarray,
    k_selection: str,
    sampling_rate: Optional[float] = None,
) -> List[Path]:
    """cca_result.json plus weight, weight-function and canonical-score CSVs."""
    out_dir = Path(out_dir)
    report = CcaReport(
        N=len(fit_set.subjects),
        T=fit_set.T,
        k_selection=k_selection,
        standardized=outcomes.standardized,
        failed_subjects=fit_set.failures,
        **result_to_dict(result, outcomes.variable_names),
    )
    q_index = np.arange(1, result.Q + 1)
    cepstral = pd.DataFrame({
        "q": np.repeat(q_index, result.K),
        "k": np.tile(np.arange(result.K), result.Q),
        "weight": result.cepstral_weights.reshape(-1),
    })
    outcome = pd.DataFrame({
        "q": np.repeat(q_index, result.P),
        "variable": np.tile(list(outcomes.variable_names), result.Q),
        "weight": result.outcome_weights.reshape(-1),
    })
    score_frame = pd.DataFrame({
        "subject": np.repeat(list(fit_set.subjects), result.Q),
        "q": np.tile(q_index, len(fit_set.subjects)),
        "cepstral_score": scores[:, :, 0].reshape(-1),
        "outcome_score": scores[:, :, 1].reshape(-1),
    })
    return [
        _write_json(report, out_dir / "cca_result.json"),
        _write_csv(cepstral, out_dir / "cepstral_weights.csv"),
        _write_csv(outcome, out_dir / "outcome_weights.csv"),
        _write_csv(weight_function_frame(result, grid, sampling_rate), out_dir / "weight_functions.csv"),
        _write_csv(score_frame, out_dir / "canonical_scores.csv"),
    ]


def simulation_summary(report: SimulationReport, table: Optional[pd.DataFrame] = None) -> SimulationSummary:
    """Build the JSON model from a report (and an optional checked table)."""
    table = report_table(report) if table is None else table
    metrics = {}
    for metric, row in table.iterrows():
        values = {k: (None if pd.isna(v) else v) for k, v in row.items()}
        if values.get("passed") is not None:
            values["passed"] = bool(values["passed"])
        metrics[str(metric)] = MetricSummary(**values)
    return SimulationSummary(
        design=report.design,
        k_mode=report.k_mode,
        replicates_kept=report.n_success,
        replicates_failed=len(report.failures),
        failure_rate=report.failure_rate,
        selected_k=report.selected_k,
        metrics=metrics,
        failures=[{"replicate": str(r), "reason": reason} for r, reason in report.failures],
    )


def write_simulation(
    out_dir: Path,
    report: SimulationReport,
    table: Optional[pd.DataFrame] = None,
) -> List[Path]:
    """simulation_report.json, error_table.csv and raw_errors.csv."""
    out_dir = Path(out_dir)
    table = report_table(report) if table is None else table
    return [
        _write_json(simulation_summary(report, table), out_dir / "simulation_report.json"),
        _write_csv(table.reset_index(), out_dir / "error_table.csv"),
        _write_csv(report.raw, out_dir / "raw_errors.csv"),
    ]
