import io
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from painmtl.data import (
    FEATURE_COLUMNS,
    MASK_COLUMNS,
    PAIN_LABELS,
    ClassLabel,
    Dataset,
    Sample,
    SynthConfig,
    binary_view,
    dumps_csv,
    kfold_split,
    load_csv,
    load_ground_truth,
    save_csv,
    save_ground_truth,
    synthesize_dataset,
    synthesize_ecg,
)
from painmtl.errors import (
    ConfigError,
    LabelError,
    ParseError,
    SchemaError,
    TooFewSamples,
    ValidationError,
)
from painmtl.features import FeatureVector
from painmtl.signal import SampledSignal


def feature_sample(subject, label, seed=0):
    values = np.random.default_rng(seed).normal(size=17)
    return Sample(subject, label, features=FeatureVector(values, np.ones(17, dtype=bool)))


def grid_dataset(n_subjects, per_class, labels=tuple(ClassLabel)):
    samples = [feature_sample(f"S{s}", lab, seed=100 * s + i)
               for s in range(n_subjects) for lab in labels for i in range(per_class)]
    return Dataset(samples)


@pytest.fixture(scope="module")
def small_synth():
    return synthesize_dataset(SynthConfig(n_subjects=3, per_class=2, seed=11))


class TestClassLabel:
    def test_levels(self):
        assert [c.level for c in ClassLabel] == [0, 1, 2, 3, 4]

    def test_parse(self):
        assert ClassLabel.parse(" p3 ") is ClassLabel.P3
        assert ClassLabel.parse(ClassLabel.P1) is ClassLabel.P1
        with pytest.raises(LabelError):
            ClassLabel.parse("P5")


class TestSample:
    def test_needs_content(self):
        with pytest.raises(ValidationError):
            Sample("S1", "BLN")

    def test_window_duration(self):
        Sample("S1", "BLN", sc_window=SampledSignal(np.zeros(2816), 512))
        Sample("S1", "BLN", sc_window=SampledSignal(np.zeros(2817), 512))
        with pytest.raises(ValidationError):
            Sample("S1", "BLN", sc_window=SampledSignal(np.zeros(2600), 512))


class TestCsv:
    def test_round_trip_raw_and_features(self, small_synth):
        ds = small_synth[0].with_features()
        back = load_csv(io.StringIO(dumps_csv(ds)))
        assert len(back) == len(ds)
        for a, b in zip(ds, back):
            assert (a.subject_id, a.label) == (b.subject_id, b.label)
            np.testing.assert_allclose(b.sc_window.samples, a.sc_window.samples, rtol=0, atol=1e-12)
            np.testing.assert_allclose(b.ecg_window.samples, a.ecg_window.samples, rtol=0, atol=1e-12)
            np.testing.assert_allclose(b.features.values, a.features.values, rtol=0, atol=1e-12)
            np.testing.assert_array_equal(b.features.validity_mask, a.features.validity_mask)

    def test_feature_only_file(self):
        ds = grid_dataset(2, 1)
        text = dumps_csv(ds)
        header = text.splitlines()[0].split(",")
        assert header == ["subject_id", "label", *FEATURE_COLUMNS, *MASK_COLUMNS]
        back = load_csv(io.StringIO(text))
        assert len(back) == 10 and len(back.subjects) == 2
        assert all(s.sc_window is None and s.features is not None for s in back)

    def test_file_path(self, tmp_path, small_synth):
        path = tmp_path / "raw.csv"
        save_csv(small_synth[0], path)
        back = load_csv(path)
        assert back[0].sc_window == small_synth[0][0].sc_window

    def test_unknown_label_names_row(self):
        text = dumps_csv(grid_dataset(1, 1)).replace("\nS0,P2,", "\nS0,P5,")
        with pytest.raises(LabelError, match="row 4"):
            load_csv(io.StringIO(text))

    def test_bad_number_names_row(self):
        lines = dumps_csv(grid_dataset(1, 1)).splitlines()
        cells = lines[2].split(",")
        cells[3] = "abc"
        lines[2] = ",".join(cells)
        with pytest.raises(ParseError) as err:
            load_csv(io.StringIO("\n".join(lines)))
        assert err.value.row == 3

    def test_missing_columns(self):
        with pytest.raises(SchemaError):
            load_csv(io.StringIO("subject_id,label\nS1,BLN\n"))
        with pytest.raises(SchemaError):
            load_csv(io.StringIO("label,f00\n"))

    def test_deterministic_bytes(self, small_synth):
        assert dumps_csv(small_synth[0]) == dumps_csv(small_synth[0])

    def test_ground_truth_round_trip(self, small_synth):
        buf = io.StringIO()
        save_ground_truth(small_synth[1], buf)
        back = load_ground_truth(io.StringIO(buf.getvalue()))
        assert back.records == small_synth[1].records


class TestSynthesizeEcg:
    def test_60_bpm(self):
        _, beats = synthesize_ecg(60, 10.0, 512)
        np.testing.assert_allclose(beats.beat_times_s, np.arange(10) + 0.5, rtol=0, atol=1e-12)

    def test_120_bpm(self):
        _, beats = synthesize_ecg(120, 5.5, 512)
        assert len(beats) == 11
        np.testing.assert_allclose(np.diff(beats.beat_times_s), 0.5, rtol=0, atol=1e-12)

    def test_noise_only_changes_samples(self):
        a, ba = synthesize_ecg(80, 5.5, 512, noise_sd=0.0, seed=3)
        b, bb = synthesize_ecg(80, 5.5, 512, noise_sd=0.05, seed=3)
        np.testing.assert_array_equal(ba.beat_times_s, bb.beat_times_s)
        assert not np.array_equal(a.samples, b.samples)

    def test_rate_bounds(self):
        with pytest.raises(ConfigError):
            synthesize_ecg(25, 5.5, 512)
        with pytest.raises(ConfigError):
            synthesize_ecg(230, 5.5, 512)


class TestSynthesizeDataset:
    def test_shape_and_determinism(self):
        cfg = SynthConfig(n_subjects=2, per_class=3, seed=5, sample_rate_hz=128)
        a, truth = synthesize_dataset(cfg)
        b, _ = synthesize_dataset(cfg)
        assert len(a) == 30 and len(truth) == 30
        assert Counter(a.labels) == {c: 6 for c in ClassLabel}
        assert all(x.sc_window == y.sc_window and x.ecg_window == y.ecg_window for x, y in zip(a, b))

    def test_seed_matters(self):
        a, _ = synthesize_dataset(SynthConfig(n_subjects=1, per_class=1, seed=1, sample_rate_hz=64))
        b, _ = synthesize_dataset(SynthConfig(n_subjects=1, per_class=1, seed=2, sample_rate_hz=64))
        assert a[0].sc_window != b[0].sc_window

    @pytest.mark.parametrize("field,value", [("n_subjects", 0), ("per_class", 0),
                                             ("noise_sd", -1.0), ("sample_rate_hz", 0.0)])
    def test_invalid_config(self, field, value):
        with pytest.raises(ConfigError):
            synthesize_dataset(SynthConfig(**{field: value}))

    def test_ground_truth_beats_match_windows(self, small_synth):
        ds, truth = small_synth
        from painmtl.signal import detect_r_peaks
        for s, rec in list(zip(ds, truth.records))[:10]:
            found = detect_r_peaks(s.ecg_window).beat_times_s
            inner = [b for b in rec.beat_times_s if 0.05 < b < 5.45]
            hits = sum(np.min(np.abs(found - b)) <= 0.03 for b in inner)
            assert hits >= len(inner) - 1

    def _max_sc(self, cfg):
        ds, _ = synthesize_dataset(cfg)
        out = {c: [] for c in ClassLabel}
        for s in ds:
            out[s.label].append(s.sc_window.samples.max())
        return {c: np.array(v) for c, v in out.items()}

    def test_no_effect_indistinguishable(self):
        m = self._max_sc(SynthConfig(n_subjects=10, per_class=20, effect_size=0.0,
                                     sample_rate_hz=64, seed=3))
        assert stats.ttest_ind(m[ClassLabel.BLN], m[ClassLabel.P4]).pvalue > 0.01

    def test_large_effect_separates(self):
        m = self._max_sc(SynthConfig(n_subjects=10, per_class=20, effect_size=1.0,
                                     noise_sd=0.1, sample_rate_hz=512, seed=3))
        assert m[ClassLabel.P4].min() > m[ClassLabel.BLN].max()

    def test_monotone_class_means(self):
        m = self._max_sc(SynthConfig(n_subjects=10, per_class=20, effect_size=0.5,
                                     sample_rate_hz=64, seed=4))
        means = [m[c].mean() for c in ClassLabel]
        assert all(b >= a for a, b in zip(means, means[1:]))

    def test_opposed_polarity(self):
        _, truth = synthesize_dataset(SynthConfig(n_subjects=20, per_class=1,
                                                  subject_heterogeneity=1.0, sample_rate_hz=32))
        gains = {r.subject_id: r.subject_gain for r in truth.records}
        signs = Counter(np.sign(list(gains.values())))
        assert signs[1.0] == 10 and signs[-1.0] == 10


class TestKfold:
    def test_biovid_shape(self):
        ds = grid_dataset(87, 20)
        folds = kfold_split(ds, 10, seed=0)
        cells = Counter((ds[i].subject_id, ds[i].label, f) for i, f in enumerate(folds.fold_of_sample))
        assert set(cells.values()) == {2} and len(cells) == 87 * 5 * 10
        view = binary_view(ds, "P4")
        assert len(view) == 3480 and int(view.targets().sum()) == 1740
        vf = kfold_split(view, 10, seed=0)
        for f in range(10):
            assert len(vf.test_indices(f)) == 348

    def test_partition_and_coverage(self):
        ds = grid_dataset(4, 7)
        folds = kfold_split(ds, 3, seed=2)
        tests = np.concatenate([te for _, te in folds])
        assert sorted(tests.tolist()) == list(range(len(ds)))
        for tr, _ in folds:
            assert set(ds.subset(tr).subjects) == set(ds.subjects)

    def test_remainder_goes_to_low_folds(self):
        ds = grid_dataset(1, 7, labels=(ClassLabel.BLN,))
        counts = np.bincount(kfold_split(ds, 3, seed=0).fold_of_sample)
        assert counts.tolist() == [3, 2, 2]

    def test_invalid_k(self):
        ds = grid_dataset(1, 3)
        with pytest.raises(TooFewSamples):
            kfold_split(ds, 1, seed=0)
        with pytest.raises(TooFewSamples, match="S0"):
            kfold_split(ds, 4, seed=0)

    def test_seeds(self):
        ds = grid_dataset(3, 10)
        a, b, c = (kfold_split(ds, 5, s).fold_of_sample for s in (1, 1, 2))
        np.testing.assert_array_equal(a, b)
        assert not np.array_equal(a, c)
        assert sorted(np.bincount(a)) == sorted(np.bincount(c))

    @settings(max_examples=30, deadline=None)
    @given(st.integers(1, 4), st.integers(2, 6), st.integers(0, 3), st.integers(0, 1000))
    def test_even_cells(self, n_subjects, k, extra, seed):
        ds = grid_dataset(n_subjects, k + extra)
        fold_of = kfold_split(ds, k, seed).fold_of_sample
        per_cell = Counter((ds[i].subject_id, ds[i].label) for i in range(len(ds)))
        for cell in per_cell:
            idx = [i for i in range(len(ds)) if (ds[i].subject_id, ds[i].label) == cell]
            counts = np.bincount(fold_of[idx], minlength=k)
            assert counts.max() - counts.min() <= 1


class TestBinaryView:
    def test_bln_rejected(self):
        with pytest.raises(ValidationError):
            binary_view(grid_dataset(1, 1), ClassLabel.BLN)

    def test_missing_positive_class(self):
        ds = grid_dataset(2, 2, labels=(ClassLabel.BLN, ClassLabel.P1))
        view = binary_view(ds, "P3")
        assert len(view) == 4 and view.targets().sum() == 0

    def test_targets_need_view(self):
        with pytest.raises(ValidationError):
            grid_dataset(1, 1).targets()

    def test_all_pain_levels(self):
        ds = grid_dataset(2, 3)
        for p in PAIN_LABELS:
            view = binary_view(ds, p)
            assert len(view) == 12 and view.targets().sum() == 6
