"""Command runners behind main.py: spectra, fit, cca and simulate."""

import os
from pathlib import Path
from typing import Callable, Dict, List, Literal, Optional, Tuple

from pydantic import BaseModel, Field, PositiveFloat, PositiveInt, field_validator, model_validator

from src.cca import canonical_scores, cepstral_cca, covariances
from src.cepstral import CepstralFitSet, FitOptions, OrderSelection, fit_panel, select_order
from src.config import (
    GRID_RESOLUTION,
    MAX_ITERATIONS,
    MIN_GRID_RESOLUTION,
    NLL_REL_TOL,
    OUTPUT_DIR,
    SCORE_TOL_PER_FREQ,
    ensure_directories,
    thread_override,
    validate_config,
)
from src.dataset import load_panel, load_series, standardize_outcomes, write_outcomes, write_panel
from src.exceptions import (
    CepstralCcaError,
    InputError,
    NumericalError,
    ReferenceCheckError,
    ReplicateFailureError,
)
from src.logger import logger
from src.reporting import (
    read_manifest,
    write_aic,
    write_cca,
    write_fit,
    write_log_spectra,
    write_manifest,
    write_simulation,
    write_spectra,
)
from src.simulate import SimulationDesign, reference_check, replicate_rng, report_table, run_study, simulate_panel
from src.spectral import PeriodogramSet, adjusted_log_periodogram, dense_grid, periodogram


EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERICAL = 3
EXIT_REPRODUCTION = 4

READ_COMMANDS = {"spectra": ("series",), "fit": ("series",), "cca": ("series", "outcomes")}


class RunConfig(BaseModel):
    """Effective options of one CLI run."""
    command: Literal["spectra", "fit", "cca", "simulate"]
    series: Optional[Path] = None
    outcomes: Optional[Path] = None
    out: Path = OUTPUT_DIR
    k: Optional[PositiveInt] = None
    k_range: Optional[Tuple[int, int]] = None
    standardize: bool = False
    sampling_rate: Optional[PositiveFloat] = None
    grid: int = Field(default=GRID_RESOLUTION, ge=MIN_GRID_RESOLUTION)
    max_iterations: PositiveInt = MAX_ITERATIONS
    score_tolerance: PositiveFloat = SCORE_TOL_PER_FREQ
    nll_tolerance: PositiveFloat = NLL_REL_TOL
    threads: PositiveInt = 1
    n: PositiveInt = 100
    t: PositiveInt = 100
    replicates: PositiveInt = 500
    seed: int = 42
    write_panel: bool = False
    check_reference: bool = False

    @field_validator("k_range", mode="before")
    @classmethod
    def _parse_k_range(cls, value):
        if value is None or isinstance(value, (list, tuple)):
            return value
        parts = str(value).split(":")
        if len(parts) != 2:
            raise ValueError(f"k-range must look like a:b, got '{value}'")
        try:
            return int(parts[0]), int(parts[1])
        except ValueError:
            raise ValueError(f"k-range bounds must be integers, got '{value}'") from None

    @field_validator("k_range")
    @classmethod
    def _check_k_range(cls, value):
        if value is not None and not 1 <= value[0] <= value[1]:
            raise ValueError(f"k-range must satisfy 1 <= a <= b, got {value[0]}:{value[1]}")
        return value

    @model_validator(mode="after")
    def _check_command(self) -> "RunConfig":
        if self.k is not None and self.k_range is not None:
            raise ValueError("Give either --k or --k-range, not both")
        for name in READ_COMMANDS.get(self.command, ()):
            path = getattr(self, name)
            if path is None:
                raise ValueError(f"--{name} is required for '{self.command}'")
            if not Path(path).exists():
                raise ValueError(f"Input file not found: {path}")
        return self

    def fit_options(self) -> FitOptions:
        return FitOptions(
            max_iterations=self.max_iterations,
            score_tolerance=self.score_tolerance,
            nll_tolerance=self.nll_tolerance,
        )


def resolve_threads(requested: Optional[int]) -> int:
    """CEPSTRA_CCA_THREADS wins over --threads; the default is every core."""
    override = thread_override()
    if override is not None:
        return override
    return requested or os.cpu_count() or 1


def _fit_order(p: PeriodogramSet, config: RunConfig) -> Tuple[CepstralFitSet, Optional[OrderSelection]]:
    """Fixed K when --k is given, AIC over --k-range (or the default range) otherwise."""
    opts = config.fit_options()
    if config.k is not None:
        fit_set = fit_panel(p, config.k, opts, config.threads)
        if not fit_set.all_converged:
            logger.warning(
                f"K={config.k}: fits did not converge for subject(s) {fit_set.failures}"
            )
        return fit_set, None
    selection = select_order(p, config.k_range, opts, config.threads)
    logger.info(f"AIC selected K={selection.selected_k}")
    return selection.selected_fit, selection


def _k_selection(config: RunConfig, fit_set: CepstralFitSet) -> str:
    return f"fixed K={fit_set.K}" if config.k is not None else f"AIC K={fit_set.K}"


def cmd_spectra(config: RunConfig) -> List[Path]:
    """Periodograms and adjusted log-periodograms; log-spectra when an order is asked for."""
    panel = load_series(config.series)
    p = periodogram(panel)
    written = write_spectra(
        config.out,
        p.subjects,
        p.freqs,
        p.values,
        adjusted_log_periodogram(p),
        config.sampling_rate,
    )
    if config.k is not None or config.k_range is not None:
        fit_set, selection = _fit_order(p, config)
        written.append(write_log_spectra(config.out, fit_set, dense_grid(config.grid), config.sampling_rate))
        if selection is not None:
            written.append(write_aic(config.out, selection))
    return written


def cmd_fit(config: RunConfig) -> List[Path]:
    """Cepstral coefficients and per-subject diagnostics."""
    p = periodogram(load_series(config.series))
    fit_set, selection = _fit_order(p, config)
    written = write_fit(config.out, fit_set)
    if selection is not None:
        written.append(write_aic(config.out, selection))
    return written


def cmd_cca(config: RunConfig) -> List[Path]:
    """Full pipeline on a series/outcomes pair."""
    panel, outcomes = load_panel(config.series, config.outcomes)
    if config.standardize:
        outcomes = standardize_outcomes(outcomes)
    fit_set, selection = _fit_order(periodogram(panel), config)
    bundle = covariances(fit_set.coefficients, outcomes)
    result = cepstral_cca(bundle)
    scores = canonical_scores(result, fit_set.coefficients, outcomes, bundle)
    written = write_cca(
        config.out,
        result,
        fit_set,
        outcomes,
        scores,
        dense_grid(config.grid),
        _k_selection(config, fit_set),
        config.sampling_rate,
    )
    if selection is not None:
        written.append(write_aic(config.out, selection))
    return written


def cmd_simulate(config: RunConfig) -> List[Path]:
    """Monte Carlo study of the squared errors under the simulation design.

    Raises:
        ReplicateFailureError: Too many replicates failed (partial report written)
        ReferenceCheckError: --check-reference was given and a metric is off
    """
    design = SimulationDesign(N=config.n, T=config.t, replicates=config.replicates, seed=config.seed)
    written: List[Path] = []
    if config.write_panel:
        sample = simulate_panel(design, replicate_rng(design.seed, 0))
        series_path, outcomes_path = config.out / "series.csv", config.out / "outcomes.csv"
        write_panel(sample.panel, series_path)
        write_outcomes(sample.outcomes, outcomes_path)
        written += [series_path, outcomes_path]

    k_mode = config.k if config.k is not None else "aic"
    try:
        report = run_study(design, config.fit_options(), k_mode, config.k_range, config.threads)
    except ReplicateFailureError as e:
        write_simulation(config.out, e.report)
        raise

    if not config.check_reference:
        return written + write_simulation(config.out, report, report_table(report))
    try:
        table = reference_check(report)
    except KeyError as e:
        raise InputError(f"--check-reference: {e.args[0]}") from None
    written += write_simulation(config.out, report, table)
    failed = table.index[~table["passed"].astype(bool)].tolist()
    if failed:
        raise ReferenceCheckError(f"Metrics outside the reference tolerance: {failed}")
    logger.info("All metrics within the reference tolerance")
    return written


COMMANDS: Dict[str, Callable[[RunConfig], List[Path]]] = {
    "spectra": cmd_spectra,
    "fit": cmd_fit,
    "cca": cmd_cca,
    "simulate": cmd_simulate,
}


def config_from_manifest(path: Path, out: Optional[Path] = None) -> RunConfig:
    """RunConfig stored in a manifest, optionally redirected to another directory."""
    manifest = read_manifest(path)
    options = dict(manifest.config)
    options.update(manifest.fit_options)
    options.pop("max_halvings", None)
    if out is not None:
        options["out"] = out
    return RunConfig(**options)


def execute(config: RunConfig) -> List[Path]:
    """Run one command and write its manifest."""
    validate_config()
    ensure_directories(config.out)
    logger.info(f"Running '{config.command}' into {config.out}")
    try:
        written = COMMANDS[config.command](config)
    finally:
        write_manifest(config.out, config.command, config.model_dump(mode="json"), config.fit_options())
    logger.info(f"'{config.command}' wrote {len(written)} file(s)")
    return written


def run_command(build_config: Callable[[], RunConfig]) -> int:
    """Build the config, run it and map failures to exit codes.

    Returns:
        0 on success, 2 for input errors, 3 for numerical failures,
        4 when a simulation misses its failure or reference threshold
    """
    try:
        config = build_config()
        written = execute(config)
    except (ReplicateFailureError, ReferenceCheckError) as e:
        logger.error(f"Reproduction check failed: {e}")
        print(f"Error: {e}")
        return EXIT_REPRODUCTION
    except NumericalError as e:
        logger.error(f"Numerical failure: {e}", exc_info=True)
        print(f"Error: {e}")
        return EXIT_NUMERICAL
    except (ValueError, FileNotFoundError) as e:
        logger.error(f"Input error: {e}")
        print(f"Error: {e}")
        return EXIT_INPUT
    except CepstralCcaError as e:
        logger.error(f"Unexpected pipeline error: {e}", exc_info=True)
        print(f"Error: {e}")
        return EXIT_NUMERICAL

    for path in written:
        print(f"✓ {path}")
    return EXIT_OK
