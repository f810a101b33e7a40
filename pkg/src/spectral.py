"""Periodograms and the cosine design shared by cepstral fitting and CCA.

Frequencies are in cycles per sample. Only the Fourier indices
l = 1..floor((T-1)/2) are used: the zero frequency and, for even T, the
Nyquist index are dropped.
"""

from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np
import pandas as pd

from src.dataset import TimeSeriesPanel
from src.exceptions import OrderError


EULER_GAMMA = float(np.euler_gamma)


def n_frequencies(T: int) -> int:
    """Number of retained Fourier frequencies, floor((T-1)/2)."""
    return (int(T) - 1) // 2


def fourier_grid(T: int) -> np.ndarray:
    """Retained Fourier frequencies l/T, l = 1..floor((T-1)/2)."""
    return np.arange(1, n_frequencies(T) + 1) / float(T)


def dense_grid(resolution: int) -> np.ndarray:
    """Evenly spaced grid over [0, 0.5] with `resolution` points."""
    return np.linspace(0.0, 0.5, int(resolution))


@dataclass(frozen=True)
class PeriodogramSet:
    """Raw periodogram ordinates Y_jl for every subject of a panel."""
    T: int
    freqs: np.ndarray
    values: np.ndarray
    subjects: tuple = ()

    @property
    def N(self) -> int:
        return self.values.shape[0]

    @property
    def m(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class CosineDesign:
    """The floor((T-1)/2) x K matrix C whose l-th row is C_l."""
    T: int
    K: int
    rows: np.ndarray


def periodogram(panel: Union[TimeSeriesPanel, np.ndarray]) -> PeriodogramSet:
    """Compute Y_jl = |sum_t X_jt exp(-2 pi i l t / T)|^2 / T for each subject.

    Accepts a TimeSeriesPanel or a raw N x T (or length-T) array.
    """
    if isinstance(panel, TimeSeriesPanel):
        series, subjects = panel.series, panel.subjects
    else:
        series = np.atleast_2d(np.asarray(panel, dtype=float))
        subjects = tuple(f"s{j + 1:03d}" for j in range(series.shape[0]))
    T = series.shape[1]
    if T < 4:
        raise ValueError(f"Series length must be at least 4, got {T}")
    m = n_frequencies(T)
    dft = np.fft.fft(series, axis=1)[:, 1:m + 1]
    values = (dft.real ** 2 + dft.imag ** 2) / T
    values.setflags(write=False)
    return PeriodogramSet(T=T, freqs=fourier_grid(T), values=values, subjects=tuple(subjects))


def cosine_design(T: int, K: int) -> CosineDesign:
    """Build the cosine design for series length T and truncation order K.

    Raises:
        OrderError: If K is outside 1..floor((T-1)/2)
    """
    m = n_frequencies(T)
    if not 1 <= K <= m:
        raise OrderError(f"Truncation order K={K} must lie in 1..{m} for T={T}")
    ell = np.arange(1, m + 1)[:, None]
    k = np.arange(K)[None, :]
    rows = np.sqrt(2.0) * np.cos(2.0 * np.pi * ell * k / T)
    rows[:, 0] = 1.0
    rows.setflags(write=False)
    return CosineDesign(T=int(T), K=int(K), rows=rows)


def cosine_series(coefficients: Sequence[float], grid: Sequence[float]) -> np.ndarray:
    """Evaluate c_0 + sum_k c_k sqrt(2) cos(2 pi omega k) on a frequency grid."""
    coefficients = np.asarray(coefficients, dtype=float).reshape(-1)
    grid = np.asarray(grid, dtype=float)
    if not np.all(np.isfinite(grid)):
        raise ValueError("Frequency grid contains non-finite values")
    k = np.arange(1, coefficients.size)
    basis = np.sqrt(2.0) * np.cos(2.0 * np.pi * np.multiply.outer(grid, k))
    return coefficients[0] + basis @ coefficients[1:]


def default_log_floor(y: np.ndarray) -> float:
    """Floor used before taking logs: 1e-12 * max(1, mean(Y))."""
    return 1e-12 * max(1.0, float(np.mean(y)))


def adjusted_log_periodogram(
    p: Union[PeriodogramSet, np.ndarray],
    floor: Optional[float] = None,
) -> np.ndarray:
    """Bias-adjusted log-periodogram log(max(Y, floor)) + gamma.

    With floor=None each subject row gets its own default_log_floor.
    """
    values = np.atleast_2d(p.values if isinstance(p, PeriodogramSet) else np.asarray(p, dtype=float))
    if floor is None:
        floors = np.array([default_log_floor(row) for row in values])[:, None]
    else:
        if floor <= 0:
            raise ValueError(f"Log floor must be positive, got {floor}")
        floors = float(floor)
    return np.log(np.maximum(values, floors)) + EULER_GAMMA


def periodogram_frame(
    subjects: Sequence[str],
    freqs: np.ndarray,
    values: np.ndarray,
    sampling_rate: Optional[float] = None,
) -> pd.DataFrame:
    """Long table subject,freq[,freq_hz],value for plotting."""
    values = np.atleast_2d(values)
    frame = pd.DataFrame({
        "subject": np.repeat(list(subjects), len(freqs)),
        "freq": np.tile(freqs, len(subjects)),
    })
    if sampling_rate is not None:
        frame["freq_hz"] = frame["freq"] * sampling_rate
    frame["value"] = values.reshape(-1)
    return frame
