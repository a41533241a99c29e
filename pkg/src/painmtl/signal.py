"""Signal conditioning for ECG and skin conductance windows.

Bandpass filtering, Pan-Tompkins R-peak detection and inter-beat-interval
construction. Everything here is a pure function of its inputs.
"""
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import signal as sps

from . import _backend
from .errors import (
    BandEdgeError,
    NoBeatsDetected,
    SignalTooShort,
    TooFewBeats,
    ValidationError,
)

# Pan-Tompkins constants
QRS_BAND_HZ = (5.0, 15.0)
QRS_BAND_ORDER = 2
INTEGRATION_WINDOW_S = 0.150
REFRACTORY_S = 0.200
TWAVE_WINDOW_S = 0.360
SEARCH_BACK_S = 0.150
EDGE_S = 0.5


@dataclass(frozen=True)
class SampledSignal:
    samples: np.ndarray
    sample_rate_hz: float

    def __post_init__(self):
        x = np.array(self.samples, dtype=np.float64)
        if x.ndim != 1 or x.size < 1:
            raise ValidationError("samples must be a non-empty 1-D sequence")
        if not np.all(np.isfinite(x)):
            raise ValidationError("samples must be finite")
        if not (self.sample_rate_hz > 0):
            raise ValidationError(f"sample_rate_hz must be positive, got {self.sample_rate_hz}")
        x.setflags(write=False)
        object.__setattr__(self, "samples", x)
        object.__setattr__(self, "sample_rate_hz", float(self.sample_rate_hz))

    def __len__(self):
        return self.samples.shape[0]

    @property
    def duration_s(self):
        return len(self) / self.sample_rate_hz

    def __eq__(self, other):
        if not isinstance(other, SampledSignal):
            return NotImplemented
        return (self.sample_rate_hz == other.sample_rate_hz
                and np.array_equal(self.samples, other.samples))

    __hash__ = None


@dataclass(frozen=True)
class BandpassSpec:
    low_hz: float = 0.1
    high_hz: float = 250.0
    order: int = 4

    def __post_init__(self):
        if not (self.low_hz > 0 and self.high_hz > self.low_hz):
            raise BandEdgeError(f"need 0 < low_hz < high_hz, got [{self.low_hz}, {self.high_hz}]")
        if int(self.order) != self.order or self.order < 1:
            raise ValidationError(f"order must be a positive integer, got {self.order}")

    def check(self, sample_rate_hz):
        nyquist = sample_rate_hz / 2.0
        if self.high_hz >= nyquist:
            raise BandEdgeError(
                f"high edge {self.high_hz} Hz must be below Nyquist ({nyquist} Hz)")


@dataclass(frozen=True)
class BeatSeries:
    beat_times_s: np.ndarray

    def __post_init__(self):
        t = np.array(self.beat_times_s, dtype=np.float64).reshape(-1)
        if t.size > 1 and not np.all(np.diff(t) > 0):
            raise ValidationError("beat times must be strictly increasing")
        t.setflags(write=False)
        object.__setattr__(self, "beat_times_s", t)

    def __len__(self):
        return self.beat_times_s.shape[0]


@dataclass(frozen=True)
class IbiSeries:
    intervals_ms: np.ndarray

    def __post_init__(self):
        v = np.array(self.intervals_ms, dtype=np.float64).reshape(-1)
        if np.any(v <= 0):
            raise ValidationError("inter-beat intervals must be positive")
        v.setflags(write=False)
        object.__setattr__(self, "intervals_ms", v)

    def __len__(self):
        return self.intervals_ms.shape[0]


def _butter_sos(spec, fs):
    return sps.butter(spec.order, [spec.low_hz, spec.high_hz], btype="bandpass",
                      output="sos", fs=fs)


def _sos_padlen(sos):
    # scipy's default sosfiltfilt pad length
    n_zero = min(int((sos[:, 2] == 0).sum()), int((sos[:, 5] == 0).sum()))
    return 3 * (2 * len(sos) + 1 - n_zero)


def bandpass_filter(signal, spec=BandpassSpec()):
    """Zero-phase Butterworth bandpass (forward-backward, effective order ``2 * spec.order``).

    The window is padded with the longest odd extension it allows. A low
    edge of 0.1 Hz settles over tens of seconds, so on short windows the
    output near the edges still carries a slow transient.
    """
    spec.check(signal.sample_rate_hz)
    sos = _butter_sos(spec, signal.sample_rate_hz)
    minimum = max(_sos_padlen(sos), 3 * spec.order)
    if len(signal) <= minimum:
        raise SignalTooShort(
            f"need more than {minimum} samples for an order-{spec.order} "
            f"bandpass, got {len(signal)}")
    out = sps.sosfiltfilt(sos, signal.samples, padlen=len(signal) - 1)
    return SampledSignal(out, signal.sample_rate_hz)


def _pan_tompkins_stages(x, fs):
    """Return (qrs-band ECG, slope envelope, integrated energy)."""
    band = BandpassSpec(QRS_BAND_HZ[0], QRS_BAND_HZ[1], QRS_BAND_ORDER)
    filtered = bandpass_filter(SampledSignal(x, fs), band).samples
    # five-point derivative, centered so it adds no delay
    deriv = np.zeros_like(filtered)
    deriv[2:-2] = (-filtered[:-4] - 2 * filtered[1:-3] + 2 * filtered[3:-1] + filtered[4:]) * (fs / 8.0)
    squared = deriv * deriv
    w = max(1, int(round(INTEGRATION_WINDOW_S * fs)))
    # trailing windows; the zero tail lets beats near the end still peak
    tail = np.zeros(w)
    energy = np.concatenate([squared, tail])
    csum = np.concatenate([[0.0], np.cumsum(energy)])
    idx = np.arange(energy.size)
    integrated = (csum[idx + 1] - csum[np.maximum(0, idx + 1 - w)]) / w
    abs_deriv = np.concatenate([np.zeros(w - 1), np.abs(deriv), tail])
    slope = sliding_window_view(abs_deriv, w).max(axis=1)
    return filtered, slope, integrated


def detect_r_peaks(ecg):
    """Locate R waves with the Pan-Tompkins detector.

    Stages: 5-15 Hz bandpass, five-point derivative, squaring, 150 ms
    moving-window integration, adaptive dual thresholds with a 200 ms
    refractory period, 360 ms T-wave discrimination and RR-based search-back.
    Each accepted integrator peak is mapped back to the largest sample of the
    bandpassed ECG in the preceding 150 ms.
    """
    fs = ecg.sample_rate_hz
    if fs < 100:
        raise ValidationError(f"QRS detection needs sample_rate_hz >= 100, got {fs}")
    if ecg.duration_s < 2.0:
        raise SignalTooShort(f"QRS detection needs >= 2 s of ECG, got {ecg.duration_s:.3f} s")
    filtered, slope, integrated = _pan_tompkins_stages(ecg.samples, fs)
    # rounding residue from filtering a flat trace must not look like beats
    floor = 1e-9 * max(1.0, float(np.max(np.abs(ecg.samples))))
    if not np.max(np.abs(filtered)) > floor:
        raise NoBeatsDetected("ECG window has no deflections")

    n = len(ecg)
    edge = int(round(EDGE_S * fs))
    lo, hi = edge, n - edge
    if hi - lo < 2:
        lo, hi = 0, n
    qrs = _backend.qrs_scan(
        integrated, slope,
        int(round(REFRACTORY_S * fs)), int(round(TWAVE_WINDOW_S * fs)), lo, hi)
    if qrs.size == 0:
        raise NoBeatsDetected("adaptive thresholds never fired")

    back = int(round(SEARCH_BACK_S * fs))
    r_idx = []
    for q in qrs.tolist():
        start, stop = max(0, q - back), min(n, q + 1)
        if start >= stop:
            continue
        r_idx.append(start + int(np.argmax(filtered[start:stop])))

    # two integrator peaks can map to one R wave; keep the taller within 200 ms
    refractory = REFRACTORY_S * fs
    kept = []
    for r in sorted(set(r_idx)):
        if kept and r - kept[-1] < refractory:
            if filtered[r] > filtered[kept[-1]]:
                kept[-1] = r
            continue
        kept.append(r)
    if not kept:
        raise NoBeatsDetected("no R wave located")
    return BeatSeries(np.asarray(kept, dtype=np.float64) / fs)


def ibi_series(beats):
    """Inter-beat intervals in milliseconds."""
    if len(beats) < 2:
        raise TooFewBeats(f"need at least 2 beats, got {len(beats)}")
    return IbiSeries(np.diff(beats.beat_times_s) * 1000.0)
