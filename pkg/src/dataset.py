"""Panels of time series and static outcomes.

CSV layouts (one row per subject):
- series:   subject,t1,...,tT
- outcomes: subject,<name1>,...,<nameP>

Subject order is taken from the series file; outcome rows are re-sorted to
match it.
"""

from dataclasses import dataclass, replace
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from src.exceptions import DegenerateColumnError, FormatError, JoinError
from src.logger import logger


SUBJECT_COLUMN = "subject"
MIN_SERIES_LENGTH = 4
MIN_SUBJECTS = 2


def _frozen(values: np.ndarray) -> np.ndarray:
    array = np.array(values, dtype=float, copy=True)
    array.setflags(write=False)
    return array


def _check_finite(values: np.ndarray, subjects: Sequence[str], columns: Sequence[str]) -> None:
    bad = np.argwhere(~np.isfinite(values))
    if bad.size:
        row, col = bad[0]
        raise ValueError(
            f"Non-finite value {values[row, col]!r} at row {row + 1} "
            f"(subject '{subjects[row]}'), column '{columns[col]}'"
        )


@dataclass(frozen=True)
class TimeSeriesPanel:
    """N subjects observed at T equally spaced times."""
    subjects: Tuple[str, ...]
    series: np.ndarray
    sampling_note: str = ""

    def __post_init__(self):
        object.__setattr__(self, "subjects", tuple(str(s) for s in self.subjects))
        object.__setattr__(self, "series", _frozen(self.series))
        if self.series.ndim != 2:
            raise FormatError(f"Series must be an N x T matrix, got shape {self.series.shape}")
        n, t = self.series.shape
        if len(self.subjects) != n:
            raise FormatError(f"{len(self.subjects)} subject ids for {n} series rows")
        if n < MIN_SUBJECTS:
            raise FormatError(f"A panel needs at least {MIN_SUBJECTS} subjects, got {n}")
        if t < MIN_SERIES_LENGTH:
            raise FormatError(f"Series length must be at least {MIN_SERIES_LENGTH}, got {t}")
        _check_finite(self.series, self.subjects, [f"t{i + 1}" for i in range(t)])

    @property
    def N(self) -> int:
        return self.series.shape[0]

    @property
    def T(self) -> int:
        return self.series.shape[1]


@dataclass(frozen=True)
class OutcomeMatrix:
    """N x P static outcomes aligned with a TimeSeriesPanel."""
    subjects: Tuple[str, ...]
    variable_names: Tuple[str, ...]
    values: np.ndarray
    standardized: bool = False

    def __post_init__(self):
        object.__setattr__(self, "subjects", tuple(str(s) for s in self.subjects))
        object.__setattr__(self, "variable_names", tuple(str(v) for v in self.variable_names))
        object.__setattr__(self, "values", _frozen(self.values))
        if self.values.ndim != 2:
            raise FormatError(f"Outcomes must be an N x P matrix, got shape {self.values.shape}")
        n, p = self.values.shape
        if p < 1:
            raise FormatError("At least one outcome variable is required")
        if len(self.variable_names) != p:
            raise FormatError(f"{len(self.variable_names)} names for {p} outcome columns")
        if len(self.subjects) != n:
            raise FormatError(f"{len(self.subjects)} subject ids for {n} outcome rows")
        _check_finite(self.values, self.subjects, self.variable_names)
        if self.standardized and n > 1:
            means = self.values.mean(axis=0)
            variances = self.values.var(axis=0, ddof=1)
            if np.any(np.abs(means) > 1e-10) or np.any(np.abs(variances - 1.0) > 1e-8):
                raise ValueError("Outcomes flagged standardized but columns are not mean 0 / variance 1")

    @property
    def N(self) -> int:
        return self.values.shape[0]

    @property
    def P(self) -> int:
        return self.values.shape[1]


def _read_wide_csv(path: Path, kind: str) -> Tuple[List[str], List[str], np.ndarray]:
    """Read a one-row-per-subject CSV into (subject ids, column names, values)."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"{kind} file not found: {path}")
    logger.debug(f"Reading {kind} CSV: {path}")
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, index_col=False)
    except pd.errors.EmptyDataError as e:
        raise FormatError(f"{path}: file is empty") from e
    except pd.errors.ParserError as e:
        raise FormatError(f"{path}: ragged rows ({e})") from e

    columns = [str(c).strip() for c in frame.columns]
    if not columns or columns[0] != SUBJECT_COLUMN:
        raise FormatError(f"{path}: first header column must be '{SUBJECT_COLUMN}', got {columns[:1]}")
    if len(columns) < 2:
        raise FormatError(f"{path}: no value columns after '{SUBJECT_COLUMN}'")

    # Short rows come back padded with NaN, trailing commas as empty strings
    missing = frame.isna() | (frame == "")
    if missing.to_numpy().any():
        row = int(np.flatnonzero(missing.to_numpy().any(axis=1))[0])
        present = int((~missing.iloc[row]).sum())
        raise FormatError(
            f"{path}: ragged rows, row {row + 1} has {present} fields, expected {len(columns)}"
        )

    subjects = [s.strip() for s in frame.iloc[:, 0]]
    raw = frame.iloc[:, 1:].to_numpy(dtype=object)
    try:
        values = raw.astype(float)
    except ValueError:
        for (row, col), cell in np.ndenumerate(raw):
            try:
                float(cell)
            except ValueError:
                raise FormatError(
                    f"{path}: cannot parse {cell!r} at row {row + 1} "
                    f"(subject '{subjects[row]}'), column '{columns[col + 1]}'"
                ) from None
        raise
    _check_finite(values, subjects, columns[1:])
    return subjects, columns[1:], values


def _check_unique(subjects: Sequence[str], path: Path) -> None:
    seen = set()
    for subject in subjects:
        if subject in seen:
            raise JoinError(f"{path}: duplicated subject id '{subject}'")
        seen.add(subject)


def load_panel(
    series_path: Path,
    outcomes_path: Path,
    sampling_note: str = "",
) -> Tuple[TimeSeriesPanel, OutcomeMatrix]:
    """Load a series CSV and an outcomes CSV with matching subject ids.

    Args:
        series_path: CSV with header subject,t1,...,tT
        outcomes_path: CSV with header subject,<name1>,...,<nameP>
        sampling_note: Free-text metadata stored on the panel

    Returns:
        Validated panel and outcomes in the series file's subject order

    Raises:
        FormatError: Ragged rows or malformed header
        JoinError: Mismatched or duplicated subject ids
        ValueError: Non-finite value (message names row and column)
    """
    subjects, _, series = _read_wide_csv(series_path, "series")
    outcome_subjects, names, outcome_values = _read_wide_csv(outcomes_path, "outcomes")
    _check_unique(subjects, series_path)
    _check_unique(outcome_subjects, outcomes_path)

    missing = [s for s in subjects if s not in set(outcome_subjects)]
    extra = [s for s in outcome_subjects if s not in set(subjects)]
    if missing or extra:
        raise JoinError(
            f"Subject ids differ between files: missing from outcomes {missing}, "
            f"absent from series {extra}"
        )

    position = {s: i for i, s in enumerate(outcome_subjects)}
    order = [position[s] for s in subjects]
    panel = TimeSeriesPanel(subjects=tuple(subjects), series=series, sampling_note=sampling_note)
    outcomes = OutcomeMatrix(
        subjects=tuple(subjects),
        variable_names=tuple(names),
        values=outcome_values[order],
    )
    logger.info(f"Loaded panel: N={panel.N}, T={panel.T}, P={outcomes.P}")
    return panel, outcomes


def load_series(series_path: Path, sampling_note: str = "") -> TimeSeriesPanel:
    """Load a series CSV on its own (no outcomes needed for spectra/fit)."""
    subjects, _, series = _read_wide_csv(series_path, "series")
    _check_unique(subjects, series_path)
    panel = TimeSeriesPanel(subjects=tuple(subjects), series=series, sampling_note=sampling_note)
    logger.info(f"Loaded series: N={panel.N}, T={panel.T}")
    return panel


def write_panel(panel: TimeSeriesPanel, path: Path) -> None:
    """Write a panel in the series CSV layout (shortest round-trip float repr)."""
    frame = pd.DataFrame(panel.series, columns=[f"t{i + 1}" for i in range(panel.T)])
    frame.insert(0, SUBJECT_COLUMN, panel.subjects)
    frame.to_csv(path, index=False)
    logger.debug(f"Wrote series CSV: {path}")


def write_outcomes(outcomes: OutcomeMatrix, path: Path) -> None:
    """Write outcomes in the outcomes CSV layout."""
    frame = pd.DataFrame(outcomes.values, columns=list(outcomes.variable_names))
    frame.insert(0, SUBJECT_COLUMN, outcomes.subjects)
    frame.to_csv(path, index=False)
    logger.debug(f"Wrote outcomes CSV: {path}")


def panel_from_arrays(
    series: np.ndarray,
    outcomes: Optional[np.ndarray] = None,
    subjects: Optional[Sequence[str]] = None,
    variable_names: Optional[Sequence[str]] = None,
    sampling_note: str = "",
) -> Tuple[TimeSeriesPanel, Optional[OutcomeMatrix]]:
    """Build a validated panel (and outcomes) from in-memory arrays."""
    series = np.atleast_2d(np.asarray(series, dtype=float))
    if subjects is None:
        subjects = [f"s{j + 1:03d}" for j in range(series.shape[0])]
    panel = TimeSeriesPanel(subjects=tuple(subjects), series=series, sampling_note=sampling_note)
    if outcomes is None:
        return panel, None
    outcomes = np.asarray(outcomes, dtype=float)
    if outcomes.ndim == 1:
        outcomes = outcomes[:, None]
    if outcomes.shape[0] != panel.N:
        raise JoinError(f"{outcomes.shape[0]} outcome rows for {panel.N} subjects")
    if variable_names is None:
        variable_names = [f"z{p + 1}" for p in range(outcomes.shape[1])]
    return panel, OutcomeMatrix(
        subjects=panel.subjects,
        variable_names=tuple(variable_names),
        values=outcomes,
    )


def standardize_outcomes(z: OutcomeMatrix) -> OutcomeMatrix:
    """Center each outcome and scale it to unit sample variance (N-1 denominator).

    Raises:
        DegenerateColumnError: If a column has zero sample variance
    """
    values = np.asarray(z.values, dtype=float)
    sd = values.std(axis=0, ddof=1)
    scale = np.maximum(1.0, np.abs(values).max(axis=0))
    for name, s, m in zip(z.variable_names, sd, scale):
        if not np.isfinite(s) or s <= 1e-12 * m:
            logger.warning(f"Cannot standardize zero-variance outcome '{name}'")
            raise DegenerateColumnError(name)
    standardized = (values - values.mean(axis=0)) / sd
    logger.debug(f"Standardized {z.P} outcome column(s)")
    return replace(z, values=standardized, standardized=True)
