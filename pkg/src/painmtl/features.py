"""Hand-crafted skin conductance and heart rate variability features.

A window maps to 17 numbers: 12 skin conductance statistics followed by 5
HRV statistics computed from the inter-beat intervals. Conventions:

* standard deviations use ``ddof=1`` everywhere;
* skewness is ``m3 / m2**1.5`` and kurtosis ``m4 / m2**2`` (central moments
  with ``1/N``, no excess correction); both are 0 for a flat window;
* the inter-quartile range uses linearly interpolated quantiles;
* the HRV slope is regressed against interval index, not time.
"""
from dataclasses import dataclass

import numpy as np

from . import _backend
from .errors import (
    DimensionMismatch,
    EmptyTrainingSet,
    NoBeatsDetected,
    TooFewBeats,
    TooFewIntervals,
    WindowTooShort,
)
from .signal import BandpassSpec, bandpass_filter, detect_r_peaks, ibi_series

SC_FEATURES = (
    "sc_max", "sc_range", "sc_std", "sc_iqr", "sc_rms", "sc_mean",
    "sc_mavfd", "sc_mavfsd", "sc_mavfd_std", "sc_mavfsd_std",
    "sc_skewness", "sc_kurtosis",
)
HRV_FEATURES = ("ibi_mean", "rmssd", "sdnn", "ibi_slope", "sdnn_rmssd_ratio")
FEATURE_NAMES = SC_FEATURES + HRV_FEATURES
N_FEATURES = len(FEATURE_NAMES)
SC_COLUMNS = slice(0, len(SC_FEATURES))
HRV_COLUMNS = slice(len(SC_FEATURES), N_FEATURES)


@dataclass(frozen=True)
class FeatureVector:
    values: np.ndarray
    validity_mask: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64).reshape(-1)
        m = np.array(self.validity_mask, dtype=bool).reshape(-1)
        if v.shape != (N_FEATURES,) or m.shape != (N_FEATURES,):
            raise DimensionMismatch(f"feature vectors have exactly {N_FEATURES} entries")
        v = np.where(m, v, 0.0)
        v.setflags(write=False)
        m.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "validity_mask", m)

    def __eq__(self, other):
        if not isinstance(other, FeatureVector):
            return NotImplemented
        return (np.array_equal(self.values, other.values)
                and np.array_equal(self.validity_mask, other.validity_mask))

    __hash__ = None


@dataclass(frozen=True)
class StandardizationStats:
    means: np.ndarray
    stds: np.ndarray


def sc_features(window):
    """The 12 skin conductance features of one window, in ``SC_FEATURES`` order."""
    x = window.samples if hasattr(window, "samples") else np.asarray(window, dtype=np.float64)
    n = x.shape[0]
    if n < 3:
        raise WindowTooShort(f"need at least 3 samples, got {n}")

    x_max = float(np.max(x))
    x_range = x_max - float(np.min(x))
    peak = float(np.max(np.abs(x)))
    rms = peak * float(np.sqrt(np.mean((x / peak) ** 2))) if peak > 0 else 0.0
    q1, q3 = np.percentile(x, [25.0, 75.0])
    mavfd = _backend.mean_abs_lag_diff(x, 1)
    mavfsd = _backend.mean_abs_lag_diff(x, 2)
    if x_range == 0.0:
        return np.array([x_max, 0.0, 0.0, 0.0, abs(x_max), x_max,
                         0.0, 0.0, 0.0, 0.0, 0.0, 0.0])

    mean = float(np.mean(x))
    centered = x - mean
    # moments of the unit-spread window; squares of tiny deviations would underflow
    spread = float(np.max(np.abs(centered)))
    u = centered / spread
    std = spread * float(np.sqrt(np.sum(u * u) / (n - 1)))
    m2 = float(np.mean(u ** 2))
    skewness = float(np.mean(u ** 3)) / m2 ** 1.5
    kurtosis = float(np.mean(u ** 4)) / m2 ** 2
    # differences of x* = (x - mean) / std are the differences of x over std
    return np.array([
        x_max, x_range, std, float(q3 - q1), rms, mean,
        mavfd, mavfsd, mavfd / std, mavfsd / std,
        skewness, kurtosis,
    ])


def hrv_features(ibis):
    """Mean IBI, RMSSD, SDNN, IBI-vs-index slope and SDNN/RMSSD, in ms units."""
    v = ibis.intervals_ms if hasattr(ibis, "intervals_ms") else np.asarray(ibis, dtype=np.float64)
    n = v.shape[0]
    if n < 2:
        raise TooFewIntervals(f"need at least 2 intervals, got {n}")
    mean = float(np.mean(v))
    rmssd = float(np.sqrt(np.mean(np.diff(v) ** 2)))
    sdnn = float(np.std(v, ddof=1))
    idx = np.arange(n) - (n - 1) / 2.0
    slope = float(np.sum(idx * (v - mean)) / np.sum(idx * idx))
    ratio = sdnn / rmssd if rmssd > 0 else 0.0
    return np.array([mean, rmssd, sdnn, slope, ratio])


def extract_features(sc=None, ecg=None, ecg_band=BandpassSpec()):
    """Feature vector for one window; missing or beat-less channels are masked."""
    values = np.zeros(N_FEATURES)
    mask = np.zeros(N_FEATURES, dtype=bool)
    if sc is not None:
        values[SC_COLUMNS] = sc_features(sc)
        mask[SC_COLUMNS] = True
    if ecg is not None:
        try:
            beats = detect_r_peaks(bandpass_filter(ecg, ecg_band))
            values[HRV_COLUMNS] = hrv_features(ibi_series(beats))
            mask[HRV_COLUMNS] = True
        except (NoBeatsDetected, TooFewBeats, TooFewIntervals):
            pass
    return FeatureVector(values, mask)


def _as_matrix(rows):
    if isinstance(rows, tuple) and len(rows) == 2 and not isinstance(rows[0], FeatureVector):
        values, mask = rows
    elif len(rows) and isinstance(rows[0], FeatureVector):
        values = np.stack([r.values for r in rows])
        mask = np.stack([r.validity_mask for r in rows])
    else:
        values = np.asarray(rows, dtype=np.float64)
        mask = None
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2:
        raise DimensionMismatch("expected a 2-D feature matrix")
    mask = np.ones(values.shape, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    if mask.shape != values.shape:
        raise DimensionMismatch("mask shape differs from value shape")
    return values, mask


def fit_standardization(train_matrix):
    """Per-column mean and sample std over the valid entries of the training rows.

    ``train_matrix`` is a list of FeatureVector, a ``(values, mask)`` pair or a
    plain 2-D array (all entries valid). Columns with fewer than two valid
    entries get std 0.
    """
    values, mask = _as_matrix(train_matrix)
    if values.shape[0] < 2:
        raise EmptyTrainingSet(f"need at least 2 training rows, got {values.shape[0]}")
    counts = mask.sum(axis=0)
    masked = np.where(mask, values, 0.0)
    means = np.divide(masked.sum(axis=0), counts, out=np.zeros(values.shape[1]), where=counts > 0)
    sq = np.where(mask, (values - means) ** 2, 0.0).sum(axis=0)
    stds = np.sqrt(np.divide(sq, counts - 1, out=np.zeros(values.shape[1]), where=counts > 1))
    return StandardizationStats(means, stds)


def apply_standardization(matrix, stats):
    """z-score each column; zero-variance columns and invalid entries become 0."""
    values, mask = _as_matrix(matrix)
    if values.shape[1] != stats.means.shape[0]:
        raise DimensionMismatch(
            f"matrix has {values.shape[1]} columns, stats describe {stats.means.shape[0]}")
    ok = stats.stds > 0
    safe = np.where(ok, stats.stds, 1.0)
    out = np.where(ok, (values - stats.means) / safe, 0.0)
    return np.where(mask, out, 0.0)
