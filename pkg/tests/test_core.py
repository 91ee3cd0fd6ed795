import numpy as np
import pytest

from sevdetect.core import (
    ConfigError,
    DataError,
    FeatureLayout,
    FeatureVector,
    Modality,
    SeverityLabel,
    Waveform,
    Window,
    merge_labels,
)
from sevdetect.features import FeatureConfig


class TestWaveform:
    def test_rejects_empty(self):
        with pytest.raises(DataError, match="empty"):
            Waveform([], 100.0, Modality.ECG, "P1")

    def test_rejects_nonfinite_with_index(self):
        with pytest.raises(DataError, match="index 2"):
            Waveform([0.0, 1.0, np.nan, 2.0], 100.0, Modality.ECG, "P1")

    @pytest.mark.parametrize("fs", [0.0, -1.0, np.inf])
    def test_rejects_bad_fs(self, fs):
        with pytest.raises(ConfigError):
            Waveform([1.0, 2.0], fs, Modality.ECG)

    def test_rejects_negative_start(self):
        with pytest.raises(ConfigError):
            Waveform([1.0, 2.0], 10.0, Modality.ECG, start_time=-1.0)

    def test_samples_are_float64_copy_and_readonly(self):
        src = np.array([1, 2, 3], dtype=np.int16)
        w = Waveform(src, 10.0, "ppg")
        assert w.samples.dtype == np.float64
        assert w.modality is Modality.PPG
        src[0] = 99
        assert w.samples[0] == 1.0
        with pytest.raises(ValueError):
            w.samples[0] = 5.0

    def test_modality_immutable(self):
        w = Waveform([1.0, 2.0], 10.0, Modality.IP)
        with pytest.raises(AttributeError):
            w.modality = Modality.ECG

    def test_unknown_modality(self):
        with pytest.raises(ConfigError):
            Waveform([1.0, 2.0], 10.0, "EEG")


class TestWindow:
    def test_from_waveform_is_view_inside_range(self):
        x = np.arange(100.0)
        w = Waveform(x, 10.0, Modality.ECG, "P7", start_time=5.0)
        win = Window.from_waveform(w, 20, 30, label="severe")
        assert win.L == 30
        assert np.shares_memory(win.samples, w.samples)
        np.testing.assert_array_equal(win.samples, x[20:50])
        assert win.start_s == pytest.approx(7.0)
        assert (win.patient_id, win.label, win.modality) == ("P7", "severe", Modality.ECG)

    @pytest.mark.parametrize("offset,length", [(-1, 10), (95, 10), (0, 1)])
    def test_from_waveform_out_of_range(self, offset, length):
        w = Waveform(np.zeros(100), 10.0, Modality.ECG)
        with pytest.raises(DataError):
            Window.from_waveform(w, offset, length)

    def test_needs_two_samples(self):
        with pytest.raises(DataError):
            Window([1.0], 10.0, Modality.ECG)


class TestFeatureLayout:
    def test_contiguity_enforced(self):
        from sevdetect.core import LayoutEntry

        with pytest.raises(ConfigError):
            FeatureLayout((LayoutEntry("time", "min", 0, 1), LayoutEntry("time", "max", 2, 3)))

    def test_default_layout_covers_416(self):
        lay = FeatureConfig().layout()
        assert lay.total_dim == 416
        assert lay.entries[0].start == 0
        assert lay.entries[-1].stop == 416
        for a, b in zip(lay.entries, lay.entries[1:]):
            assert a.stop == b.start
        groups = [e.group for e in lay.entries]
        firsts = [groups.index(g) for g in ("time", "gradient", "lowfreq", "wholefreq")]
        assert firsts == sorted(firsts)

    def test_serialized_form_is_stable(self):
        a = FeatureConfig().layout().to_json()
        b = FeatureConfig(include_groups=("wholefreq", "time", "lowfreq", "gradient")).layout().to_json()
        assert a == b

    def test_column_names_round_trip(self):
        lay = FeatureConfig().layout().prefixed("ECG")
        names = lay.column_names()
        assert names[0] == "ECG:time.min.0"
        assert len(names) == 416
        assert FeatureLayout.from_column_names(names) == lay


class TestFeatureVector:
    def test_dimension_checked(self):
        lay = FeatureConfig(include_groups=("time",)).layout()
        with pytest.raises(DataError):
            FeatureVector(np.zeros(7), lay)

    def test_nonfinite_rejected(self):
        lay = FeatureConfig(include_groups=("time",)).layout()
        with pytest.raises(DataError):
            FeatureVector(np.array([0, 0, 0, 0, 0, 0, np.inf, 0.0]), lay)


class TestMergeLabels:
    def test_sub_grade_merge(self):
        out = merge_labels(["2b1", "2b2", "3", "4"], {"2b1": "2b", "2b2": "2b", "3": "3-4", "4": "3-4"})
        assert out == ["2b", "2b", "3-4", "3-4"]

    def test_identity(self):
        assert merge_labels(["2a"], {}) == ["2a"]

    def test_forced_by_mapping(self):
        assert merge_labels(["A", "B"], {"B": "A"}) == ["A", "A"]

    def test_unknown_key_named(self):
        with pytest.raises(ConfigError, match="'Z'"):
            merge_labels(["A", "B"], {"Z": "A"})

    def test_output_has_no_old_names(self):
        mapping = {"2b1": "2b", "2b2": "2b"}
        out = merge_labels(["2a", "2b1", "2b2", "2b1"], mapping)
        assert not set(out) & set(mapping)

    def test_severity_label_objects(self):
        out = merge_labels([SeverityLabel("2b1", 2), SeverityLabel("2a", 1)], {"2b1": "2b"})
        assert [s.name for s in out] == ["2b", "2a"]
        assert out[1].ordinal == 1

    def test_empty_name_rejected(self):
        with pytest.raises(ConfigError):
            SeverityLabel("")
