"""Experiment data model, CSV formats, fold assignment and a synthetic generator.

A :class:`Dataset` is an immutable sequence of :class:`Sample` windows, each
belonging to one subject and one of five stimulation classes. Raw windows
are 5.5 s long. The synthetic generator mimics that protocol so the whole
pipeline can be exercised without the licensed recordings.
"""
import csv
import enum
import io
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (
    ConfigError,
    LabelError,
    ParseError,
    SchemaError,
    TooFewSamples,
    ValidationError,
)
from .features import N_FEATURES, FeatureVector, extract_features
from .signal import BandpassSpec, BeatSeries, SampledSignal

WINDOW_S = 5.5


class ClassLabel(str, enum.Enum):
    BLN = "BLN"
    P1 = "P1"
    P2 = "P2"
    P3 = "P3"
    P4 = "P4"

    @property
    def level(self):
        return _LEVELS[self]

    @classmethod
    def parse(cls, text):
        if isinstance(text, cls):
            return text
        try:
            return cls(str(text).strip().upper())
        except ValueError:
            raise LabelError(f"unknown class label {text!r}") from None


_LEVELS = {label: i for i, label in enumerate(ClassLabel)}
PAIN_LABELS = (ClassLabel.P1, ClassLabel.P2, ClassLabel.P3, ClassLabel.P4)


@dataclass(frozen=True)
class Sample:
    subject_id: str
    label: ClassLabel
    sc_window: SampledSignal = None
    ecg_window: SampledSignal = None
    features: FeatureVector = None

    def __post_init__(self):
        object.__setattr__(self, "subject_id", str(self.subject_id))
        object.__setattr__(self, "label", ClassLabel.parse(self.label))
        if self.sc_window is None and self.ecg_window is None and self.features is None:
            raise ValidationError("a sample needs raw windows or features")
        for name in ("sc_window", "ecg_window"):
            w = getattr(self, name)
            if w is not None and abs(w.duration_s - WINDOW_S) > 1.0 / w.sample_rate_hz + 1e-12:
                raise ValidationError(
                    f"{name} lasts {w.duration_s:.4f} s, expected {WINDOW_S} s")

    @property
    def has_raw(self):
        return self.sc_window is not None or self.ecg_window is not None

    @property
    def sample_rate_hz(self):
        w = self.sc_window if self.sc_window is not None else self.ecg_window
        return None if w is None else w.sample_rate_hz


@dataclass(frozen=True)
class Dataset:
    samples: tuple
    positive: ClassLabel = None

    def __post_init__(self):
        object.__setattr__(self, "samples", tuple(self.samples))

    def __len__(self):
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)

    def __getitem__(self, i):
        return self.samples[i]

    @property
    def subjects(self):
        """Subject ids in order of first appearance."""
        return tuple(dict.fromkeys(s.subject_id for s in self.samples))

    @property
    def labels(self):
        return [s.label for s in self.samples]

    @property
    def subject_ids(self):
        return np.array([s.subject_id for s in self.samples], dtype=object)

    def targets(self):
        """Binary targets (1 for the positive class) of a binary view."""
        if self.positive is None:
            raise ValidationError("targets need a binary view; call binary_view first")
        return np.array([int(s.label == self.positive) for s in self.samples])

    def feature_matrix(self):
        """``(values, mask)`` arrays of shape ``(n, 17)``."""
        missing = [i for i, s in enumerate(self.samples) if s.features is None]
        if missing:
            raise ValidationError(f"{len(missing)} samples lack features (first: {missing[0]})")
        if not self.samples:
            return np.zeros((0, N_FEATURES)), np.zeros((0, N_FEATURES), dtype=bool)
        return (np.stack([s.features.values for s in self.samples]),
                np.stack([s.features.validity_mask for s in self.samples]))

    def subset(self, indices):
        return Dataset([self.samples[i] for i in indices], self.positive)

    def with_features(self, ecg_band=BandpassSpec(), overwrite=False):
        """Attach features computed from the raw windows."""
        out = []
        for s in self.samples:
            if s.features is not None and not overwrite:
                out.append(s)
                continue
            if not s.has_raw:
                raise ValidationError(f"sample of subject {s.subject_id} has no raw windows")
            out.append(replace(s, features=extract_features(s.sc_window, s.ecg_window, ecg_band)))
        return Dataset(out, self.positive)


# ---------------------------------------------------------------- CSV formats

RAW_COLUMNS = ("sample_rate_hz", "sc_window", "ecg_window")
FEATURE_COLUMNS = tuple(f"f{i:02d}" for i in range(N_FEATURES))
MASK_COLUMNS = tuple(f"mask{i:02d}" for i in range(N_FEATURES))


def _fmt(x):
    return repr(float(x))


def _fmt_window(w):
    return "" if w is None else ";".join(map(repr, w.samples.tolist()))


def save_csv(ds, path_or_stream, raw=None, features=None):
    """Write ``ds`` as CSV. Raw and feature column groups are emitted when any
    sample carries them, unless forced with ``raw``/``features``."""
    if raw is None:
        raw = any(s.has_raw for s in ds)
    if features is None:
        features = any(s.features is not None for s in ds)
    header = ["subject_id", "label"]
    if raw:
        header += RAW_COLUMNS
    if features:
        header += FEATURE_COLUMNS + MASK_COLUMNS

    def write(stream):
        w = csv.writer(stream, lineterminator="\n")
        w.writerow(header)
        for s in ds:
            row = [s.subject_id, s.label.value]
            if raw:
                fs = s.sample_rate_hz
                row += ["" if fs is None else _fmt(fs), _fmt_window(s.sc_window),
                        _fmt_window(s.ecg_window)]
            if features:
                if s.features is None:
                    row += [""] * (2 * N_FEATURES)
                else:
                    row += [_fmt(v) for v in s.features.values]
                    row += ["1" if m else "0" for m in s.features.validity_mask]
            w.writerow(row)

    if hasattr(path_or_stream, "write"):
        write(path_or_stream)
    else:
        with open(path_or_stream, "w", newline="", encoding="utf-8") as f:
            write(f)


def _parse_window(text, fs, row):
    text = text.strip()
    if not text:
        return None
    try:
        values = [float(v) for v in text.split(";")]
        return SampledSignal(values, fs)
    except ValueError as exc:
        raise ParseError(f"bad window samples: {exc}", row) from None


def _read_rows(stream):
    reader = csv.reader(stream)
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise SchemaError("empty file: header row is mandatory") from None
    for col in ("subject_id", "label"):
        if col not in header:
            raise SchemaError(f"missing column {col!r}", 1)
    has_raw = any(c in header for c in RAW_COLUMNS)
    has_feat = any(c in header for c in FEATURE_COLUMNS + MASK_COLUMNS)
    for group, present in ((RAW_COLUMNS, has_raw), (FEATURE_COLUMNS + MASK_COLUMNS, has_feat)):
        if present:
            missing = [c for c in group if c not in header]
            if missing:
                raise SchemaError(f"missing columns {missing}", 1)
    if not (has_raw or has_feat):
        raise SchemaError("need raw window columns or feature columns", 1)
    col = {name: i for i, name in enumerate(header)}
    samples = []
    for line_no, cells in enumerate(reader, start=2):
        if not any(c.strip() for c in cells):
            continue
        if len(cells) != len(header):
            raise ParseError(f"expected {len(header)} fields, got {len(cells)}", line_no)
        try:
            label = ClassLabel.parse(cells[col["label"]])
        except LabelError as exc:
            raise LabelError(str(exc), line_no) from None
        sc = ecg = feats = None
        try:
            if has_raw and cells[col["sample_rate_hz"]].strip():
                fs = float(cells[col["sample_rate_hz"]])
                sc = _parse_window(cells[col["sc_window"]], fs, line_no)
                ecg = _parse_window(cells[col["ecg_window"]], fs, line_no)
            if has_feat and cells[col["f00"]].strip():
                values = [float(cells[col[c]]) for c in FEATURE_COLUMNS]
                mask = [cells[col[c]].strip() for c in MASK_COLUMNS]
                if any(m not in ("0", "1") for m in mask):
                    raise ParseError("mask entries must be 0 or 1", line_no)
                feats = FeatureVector(values, [m == "1" for m in mask])
            samples.append(Sample(cells[col["subject_id"]].strip(), label, sc, ecg, feats))
        except ParseError:
            raise
        except (ValueError, ValidationError) as exc:
            raise ParseError(str(exc), line_no) from None
    return Dataset(samples)


def load_csv(path_or_stream):
    """Read a raw-window and/or feature CSV into a Dataset."""
    if hasattr(path_or_stream, "read"):
        return _read_rows(path_or_stream)
    with open(path_or_stream, newline="", encoding="utf-8") as f:
        return _read_rows(f)


# ---------------------------------------------------------- synthetic data

@dataclass(frozen=True)
class SynthConfig:
    n_subjects: int = 10
    per_class: int = 20
    sample_rate_hz: float = 512.0
    effect_size: float = 1.0
    subject_heterogeneity: float = 0.0
    noise_sd: float = 0.1
    seed: int = 0
    ecg_noise_sd: float = 0.02

    def validate(self):
        if int(self.n_subjects) != self.n_subjects or self.n_subjects < 1:
            raise ConfigError(f"n_subjects must be a positive integer, got {self.n_subjects}")
        if int(self.per_class) != self.per_class or self.per_class < 1:
            raise ConfigError(f"per_class must be a positive integer, got {self.per_class}")
        if not self.sample_rate_hz > 0:
            raise ConfigError(f"sample_rate_hz must be positive, got {self.sample_rate_hz}")
        for name in ("effect_size", "subject_heterogeneity", "noise_sd", "ecg_noise_sd"):
            if not getattr(self, name) >= 0:
                raise ConfigError(f"{name} must be non-negative, got {getattr(self, name)}")


@dataclass(frozen=True)
class GroundTruthRecord:
    subject_id: str
    label: ClassLabel
    class_effect: float
    subject_gain: float
    beat_times_s: tuple


@dataclass(frozen=True)
class GroundTruth:
    records: tuple = field(default_factory=tuple)

    def __len__(self):
        return len(self.records)

    def __getitem__(self, i):
        return self.records[i]


def save_ground_truth(gt, path_or_stream):
    def write(stream):
        w = csv.writer(stream, lineterminator="\n")
        w.writerow(["subject_id", "label", "class_effect", "subject_gain", "beat_times"])
        for r in gt.records:
            w.writerow([r.subject_id, r.label.value, _fmt(r.class_effect), _fmt(r.subject_gain),
                        ";".join(map(repr, r.beat_times_s))])

    if hasattr(path_or_stream, "write"):
        write(path_or_stream)
    else:
        with open(path_or_stream, "w", newline="", encoding="utf-8") as f:
            write(f)


def load_ground_truth(path_or_stream):
    stream = path_or_stream if hasattr(path_or_stream, "read") else open(
        path_or_stream, newline="", encoding="utf-8")
    try:
        records = []
        for row in csv.DictReader(stream):
            beats = tuple(float(v) for v in row["beat_times"].split(";") if v)
            records.append(GroundTruthRecord(row["subject_id"], ClassLabel.parse(row["label"]),
                                             float(row["class_effect"]),
                                             float(row["subject_gain"]), beats))
        return GroundTruth(tuple(records))
    finally:
        if stream is not path_or_stream:
            stream.close()


# (amplitude mV, offset s from the R wave, width s)
ECG_WAVES = (
    (0.15, -0.20, 0.025),   # P
    (-0.12, -0.03, 0.008),  # Q
    (1.00, 0.00, 0.010),    # R
    (-0.25, 0.03, 0.010),   # S
    (0.30, 0.25, 0.040),    # T
)


def render_ecg(beat_times_s, duration_s, sample_rate_hz, noise_sd=0.0, rng=None):
    """Sum-of-Gaussians ECG with the R apex of beat ``k`` at ``beat_times_s[k]``."""
    n = int(round(duration_s * sample_rate_hz))
    t = np.arange(n) / sample_rate_hz
    beats = np.asarray(beat_times_s, dtype=np.float64)
    x = np.zeros(n)
    if beats.size:
        lag = t[:, None] - beats[None, :]
        for amp, offset, width in ECG_WAVES:
            x += amp * np.exp(-0.5 * ((lag - offset) / width) ** 2).sum(axis=1)
    if noise_sd > 0:
        rng = np.random.default_rng() if rng is None else rng
        x += rng.normal(0.0, noise_sd, n)
    return x


def synthesize_ecg(heart_rate_bpm, duration_s, sample_rate_hz, noise_sd=0.0, seed=0):
    """Regular ECG whose first beat falls half a period after the window start.

    Returns the signal and the exact beat times used to build it. The seed only
    drives the additive noise, so beat placement never depends on it.
    """
    if not 30 <= heart_rate_bpm <= 220:
        raise ConfigError(f"heart_rate_bpm must be in [30, 220], got {heart_rate_bpm}")
    if not (duration_s > 0 and sample_rate_hz > 0) or noise_sd < 0:
        raise ConfigError("duration_s and sample_rate_hz must be positive, noise_sd non-negative")
    period = 60.0 / heart_rate_bpm
    count = math.ceil(duration_s / period - 0.5)
    beats = (np.arange(count) + 0.5) * period
    beats = beats[beats < duration_s]
    x = render_ecg(beats, duration_s, sample_rate_hz, noise_sd, np.random.default_rng(seed))
    return SampledSignal(x, sample_rate_hz), BeatSeries(beats)


TONIC_SC = 5.0


def _phasic_shape(t):
    # logistic rise one second into the window, exponential recovery from 4 s
    rise = 1.0 / (1.0 + np.exp(-(t - 2.0) / 0.3))
    shape = rise * np.exp(-np.maximum(0.0, t - 4.0) / 2.0)
    return shape / shape.max()


def synthesize_dataset(cfg):
    """Generate a protocol-shaped dataset and the parameters that produced it.

    Every subject shares the tonic SC level (5 uS); subjects differ only in
    how they respond. Per subject ``s``: resting phasic amplitude
    ``a_s = 1 + h * U(0, 8)``, resting heart rate ``70 + h * U(-15, 15)`` bpm
    and response gain ``g_s = 1 + h * (polarity_s * m_s - 1)``, where ``h``
    is the heterogeneity, polarities are balanced +/-1 across subjects and
    ``m_s >= 1``. At ``h = 1`` half of the subjects respond with the opposite
    sign and the resting amplitudes are spread wide enough that pooled data
    carry almost no class information. The class effect is
    ``effect_size * level / 4`` (0 for BLN up to ``effect_size`` for P4).

    SC window: ``5 + drift + (a_s + g_s * effect + jitter) * shape(t) + noise``
    with drift, jitter and per-sample noise all of s.d. ``noise_sd``.
    ECG window: heart rate ``hr_s + 3 * g_s * effect`` bpm plus 4 bpm
    per-window and 3 % beat-to-beat jitter. Samples are rounded to 1e-6.
    """
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    fs = cfg.sample_rate_hz
    n = int(round(WINDOW_S * fs))
    t = np.arange(n) / fs
    shape = _phasic_shape(t)
    h = cfg.subject_heterogeneity

    ns = cfg.n_subjects
    polarity = rng.permutation(np.where(np.arange(ns) % 2 == 0, 1.0, -1.0))
    magnitude = 1.0 + 0.25 * np.abs(rng.normal(size=ns))
    gains = 1.0 + h * (polarity * magnitude - 1.0)
    resting_amp = 1.0 + h * rng.uniform(0.0, 8.0, size=ns)
    resting_hr = 70.0 + h * rng.uniform(-15.0, 15.0, size=ns)

    samples, records = [], []
    for s in range(ns):
        sid = f"S{s + 1:03d}"
        for label in ClassLabel:
            effect = cfg.effect_size * label.level / 4.0
            for _ in range(cfg.per_class):
                amp = resting_amp[s] + gains[s] * effect + cfg.noise_sd * rng.normal()
                drift = cfg.noise_sd * rng.normal()
                sc = TONIC_SC + drift + amp * shape + rng.normal(0.0, cfg.noise_sd, n)

                hr = np.clip(resting_hr[s] + 3.0 * gains[s] * effect + 4.0 * rng.normal(),
                             40.0, 180.0)
                rr = 60.0 / hr
                beats = []
                bt = rng.uniform(0.0, rr)
                while bt < WINDOW_S:
                    beats.append(bt)
                    bt += rr * (1.0 + 0.03 * rng.normal())
                wander = 0.05 * np.sin(2 * np.pi * 0.25 * t + rng.uniform(0, 2 * np.pi))
                ecg = render_ecg(beats, WINDOW_S, fs, cfg.ecg_noise_sd, rng) + wander

                samples.append(Sample(sid, label,
                                      SampledSignal(np.round(sc, 6), fs),
                                      SampledSignal(np.round(ecg, 6), fs)))
                records.append(GroundTruthRecord(sid, label, effect, float(gains[s]),
                                                 tuple(float(b) for b in beats)))
    return Dataset(samples), GroundTruth(tuple(records))


# ------------------------------------------------------------ fold handling

@dataclass(frozen=True)
class FoldAssignment:
    k: int
    fold_of_sample: np.ndarray

    def test_indices(self, fold):
        return np.flatnonzero(self.fold_of_sample == fold)

    def train_indices(self, fold):
        return np.flatnonzero(self.fold_of_sample != fold)

    def __iter__(self):
        for f in range(self.k):
            yield self.train_indices(f), self.test_indices(f)


def kfold_split(ds, k, seed):
    """Within-subject, within-class round-robin fold assignment.

    Each (subject, class) cell is shuffled with a generator seeded by ``seed``
    and dealt to folds 0, 1, ..., k-1, 0, 1, ...; when ``k`` does not divide
    the cell size the extra samples land in the lowest-index folds.
    """
    if int(k) != k or k < 2:
        raise TooFewSamples(f"k must be an integer >= 2, got {k}")
    cells = {}
    for i, s in enumerate(ds):
        cells.setdefault((s.subject_id, s.label), []).append(i)
    order = {sid: j for j, sid in enumerate(ds.subjects)}
    rng = np.random.default_rng(seed)
    fold_of = np.full(len(ds), -1, dtype=np.int64)
    for key in sorted(cells, key=lambda c: (order[c[0]], c[1].level)):
        idx = cells[key]
        if len(idx) < k:
            raise TooFewSamples(
                f"cell (subject {key[0]}, {key[1].value}) has {len(idx)} samples, fewer than k={k}")
        perm = rng.permutation(len(idx))
        for pos, j in enumerate(perm):
            fold_of[idx[j]] = pos % k
    return FoldAssignment(int(k), fold_of)


def binary_view(ds, positive):
    """Keep only BLN (target 0) and ``positive`` (target 1) samples."""
    positive = ClassLabel.parse(positive)
    if positive is ClassLabel.BLN:
        raise ValidationError("the positive class must be one of P1..P4")
    keep = [s for s in ds if s.label in (ClassLabel.BLN, positive)]
    return Dataset(keep, positive)


def dumps_csv(ds, **kwargs):
    buf = io.StringIO()
    save_csv(ds, buf, **kwargs)
    return buf.getvalue()
