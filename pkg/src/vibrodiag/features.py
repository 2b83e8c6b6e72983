"""The 37-dimensional feature vector and z-score standardization.

Nine summary statistics (min, max, median, mean, sd, kurtosis, skewness,
range, rms) are computed per axis in the time domain and over a low
frequency band of the amplitude spectrum, giving 36 vibration features;
ambient temperature is the 37th. Column order is fixed package-wide:
the nine statistics for XAxisT, YAxisT, XAxisF, YAxisF, then Temperature.

Conventions: sample standard deviation (n-1), population central moments
for skewness and excess kurtosis, midpoint median for even lengths, and
skewness = kurtosis = 0 for constant input so downstream models never see
NaNs. Statistics are computed from the sorted values, which makes them
exactly permutation-invariant.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .errors import EmptyBand, InvalidParam, LengthMismatch, NonFinite, TooFewRows, TooFewSamples
from .signals import SignalWindow, Spectrum, fft_magnitude

FEATURE_STATS = ("Min", "Max", "Median", "Mean", "Sd", "Kurtosis", "Skewness", "Range", "Rms")
FEATURE_GROUPS = ("XAxisT", "YAxisT", "XAxisF", "YAxisF")
FEATURE_NAMES: tuple[str, ...] = tuple(
    f"{stat}{group}" for group in FEATURE_GROUPS for stat in FEATURE_STATS
) + ("Temperature",)
N_FEATURES = len(FEATURE_NAMES)

# Encloses the 26.1 Hz operating frequency at 1 Hz bin resolution.
DEFAULT_BAND_HZ = (0.0, 27.5)


class SummaryStats(NamedTuple):
    """The nine per-series statistics, in canonical column order."""

    min: float
    max: float
    median: float
    mean: float
    sd: float
    kurtosis: float
    skewness: float
    range: float
    rms: float


def summary_stats(values: Sequence[float]) -> SummaryStats:
    """Nine summary statistics of a series of at least two finite values."""
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1 or arr.size < 2:
        raise TooFewSamples("summary_stats needs at least 2 values")
    if not np.isfinite(arr).all():
        raise NonFinite("summary_stats input must be finite")
    arr = np.sort(arr)
    n = arr.size
    vmin = float(arr[0])
    vmax = float(arr[-1])
    median = float(np.median(arr))
    mean = float(np.mean(arr))
    dev = arr - mean
    m2 = float(np.mean(dev**2))
    sd = float(np.sqrt(np.sum(dev**2) / (n - 1)))
    if m2 > 0.0:
        skewness = float(np.mean(dev**3)) / m2**1.5
        kurtosis = float(np.mean(dev**4)) / m2**2 - 3.0
    else:
        skewness = 0.0
        kurtosis = 0.0
    rms = float(np.sqrt(np.mean(arr**2)))
    return SummaryStats(vmin, vmax, median, mean, sd, kurtosis, skewness, vmax - vmin, rms)


def freq_band_stats(spectrum: Spectrum, band_lo_hz: float, band_hi_hz: float) -> SummaryStats:
    """Summary statistics of the magnitude bins whose center lies in [lo, hi]."""
    if band_lo_hz >= band_hi_hz:
        raise InvalidParam("band_lo_hz must be below band_hi_hz")
    freqs = spectrum.frequencies
    mask = (freqs >= band_lo_hz) & (freqs <= band_hi_hz)
    if int(mask.sum()) < 2:
        raise EmptyBand(
            f"band [{band_lo_hz}, {band_hi_hz}] Hz selects fewer than 2 bins "
            f"at {spectrum.freq_resolution_hz} Hz resolution"
        )
    return summary_stats(spectrum.magnitudes[mask])


@dataclass(frozen=True)
class FeatureVector:
    """The 37 named features of one window plus its timestamp."""

    timestamp: int
    values: np.ndarray

    def __post_init__(self) -> None:
        vals = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", vals)
        if vals.shape != (N_FEATURES,):
            raise InvalidParam(f"expected {N_FEATURES} feature values, got shape {vals.shape}")
        if not np.isfinite(vals).all():
            raise NonFinite("feature values must be finite")

    def __getitem__(self, name: str) -> float:
        return float(self.values[FEATURE_NAMES.index(name)])

    def as_dict(self) -> dict[str, float]:
        return {name: float(v) for name, v in zip(FEATURE_NAMES, self.values)}


@dataclass(frozen=True)
class FeatureMatrix:
    """Feature rows in window order, with the canonical column names."""

    values: np.ndarray
    timestamps: np.ndarray
    feature_names: tuple[str, ...] = FEATURE_NAMES

    def __post_init__(self) -> None:
        vals = np.asarray(self.values, dtype=float)
        ts = np.asarray(self.timestamps, dtype=np.int64)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        if vals.ndim != 2 or vals.shape[0] < 1:
            raise TooFewRows("feature matrix needs at least one row")
        if vals.shape[1] != len(self.feature_names):
            raise InvalidParam("column count does not match feature_names")
        if ts.shape != (vals.shape[0],):
            raise LengthMismatch("one timestamp per row is required")

    @property
    def n_rows(self) -> int:
        return int(self.values.shape[0])

    @property
    def n_cols(self) -> int:
        return int(self.values.shape[1])

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.feature_names.index(name)]

    def take(self, indices: Sequence[int]) -> "FeatureMatrix":
        idx = np.asarray(indices, dtype=np.int64)
        return FeatureMatrix(self.values[idx], self.timestamps[idx], self.feature_names)

    @classmethod
    def from_vectors(cls, vectors: Sequence[FeatureVector]) -> "FeatureMatrix":
        if not vectors:
            raise TooFewRows("need at least one feature vector")
        return cls(
            values=np.stack([v.values for v in vectors]),
            timestamps=np.array([v.timestamp for v in vectors], dtype=np.int64),
        )


def as_values(data) -> np.ndarray:
    """Coerce a FeatureMatrix or array-like to a 2-D float array."""
    if isinstance(data, FeatureMatrix):
        return data.values
    arr = np.asarray(data, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    return arr


def extract(window: SignalWindow, band: tuple[float, float] = DEFAULT_BAND_HZ) -> FeatureVector:
    """Feature vector of one window: time stats, band-limited spectrum stats, temperature."""
    lo, hi = band
    groups: list[SummaryStats] = [
        summary_stats(window.x_samples),
        summary_stats(window.y_samples),
    ]
    for axis in ("X", "Y"):
        spectrum = fft_magnitude(window.samples(axis), window.sample_rate_hz, axis=axis)
        groups.append(freq_band_stats(spectrum, lo, hi))
    values = np.concatenate([np.asarray(g, dtype=float) for g in groups] + [[window.ambient_temp_c]])
    return FeatureVector(timestamp=window.timestamp, values=values)


def extract_matrix(
    windows: Iterable[SignalWindow], band: tuple[float, float] = DEFAULT_BAND_HZ
) -> FeatureMatrix:
    """Extract features for many windows; row order follows window order."""
    return FeatureMatrix.from_vectors([extract(w, band) for w in windows])


@dataclass(frozen=True)
class Standardizer:
    """Per-column mean and sample sd used for z-scoring; sd == 0 marks a constant column."""

    feature_names: tuple[str, ...]
    means: np.ndarray
    sds: np.ndarray

    def __post_init__(self) -> None:
        means = np.asarray(self.means, dtype=float)
        sds = np.asarray(self.sds, dtype=float)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "sds", sds)
        if means.shape != sds.shape or means.ndim != 1:
            raise InvalidParam("means and sds must be 1-D arrays of equal length")
        if (sds < 0).any():
            raise InvalidParam("standard deviations must be non-negative")

    @property
    def constant_columns(self) -> np.ndarray:
        return self.sds == 0.0


def fit_standardizer(matrix: FeatureMatrix) -> Standardizer:
    if matrix.n_rows < 2:
        raise TooFewRows("standardizer needs at least 2 rows")
    return Standardizer(
        feature_names=matrix.feature_names,
        means=matrix.values.mean(axis=0),
        sds=matrix.values.std(axis=0, ddof=1),
    )


def apply_standardizer(standardizer: Standardizer, matrix: FeatureMatrix) -> FeatureMatrix:
    """z = (x - mean)/sd per column; constant columns map to exactly 0."""
    if tuple(matrix.feature_names) != tuple(standardizer.feature_names):
        raise InvalidParam("matrix columns do not match the standardizer")
    centered = matrix.values - standardizer.means
    z = np.divide(
        centered,
        standardizer.sds,
        out=np.zeros_like(centered),
        where=standardizer.sds > 0,
    )
    return FeatureMatrix(z, matrix.timestamps, matrix.feature_names)
