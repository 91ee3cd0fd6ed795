import logging
import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from sevdetect.core import ConfigError, DataError, Modality, Window
from sevdetect.features import (
    FLAG_KURTOSIS_DEGENERATE,
    FLAG_SHORT_WINDOW,
    FeatureConfig,
    band_starts,
    chunk_bounds,
    extract,
    extract_many,
    fuse,
    gradient,
    gradient_pooling,
    kurtosis,
    low_freq_features,
    spectrum,
    time_stats,
    whole_freq_features,
    zero_crossings,
)
from sevdetect.synth import oracle_band_indices, oracle_dft, oracle_features

from conftest import make_window

signals = st.builds(
    lambda seed, n, scale, offset: np.random.default_rng(seed).standard_normal(n) * scale + offset,
    seed=st.integers(0, 2**32 - 1),
    n=st.integers(4, 2048),
    scale=st.floats(1e-3, 1e3),
    offset=st.floats(-10, 10),
)


class TestTimeStats:
    def test_hand_example(self):
        got = time_stats(np.array([1.0, 2.0, 3.0, 4.0]))
        np.testing.assert_allclose(got, [1, 4, 2.5, 2.5, math.sqrt(1.25), 30, 1.64, 0], rtol=1e-15)

    @pytest.mark.parametrize("c", [0.0, 2.5, -7.0, 1e-300, 1e150])
    def test_constant(self, c):
        L = 17
        got = time_stats(np.full(L, c))
        assert got[4] == 0.0  # std
        assert got[5] == pytest.approx(L * c * c, rel=1e-15)
        assert got[6] == 0.0  # kurtosis
        assert got[7] == 0.0
        assert got[3] == c  # mean exact
        assert kurtosis(np.full(L, c)) == (0.0, True)

    def test_constant_window_flagged(self):
        fv = extract(make_window(np.full(64, 3.0)))
        assert FLAG_KURTOSIS_DEGENERATE in fv.flags
        assert fv.values[fv.layout.slice("time", "kurtosis")][0] == 0.0

    def test_gaussian_kurtosis_near_three(self):
        x = np.random.default_rng(11).standard_normal(10**6)
        k, degenerate = kurtosis(x)
        assert 2.9 <= k <= 3.1 and not degenerate

    def test_uniform_kurtosis(self):
        # a uniform distribution has non-excess kurtosis 9/5
        x = np.random.default_rng(12).uniform(-1, 1, 10**6)
        assert kurtosis(x)[0] == pytest.approx(1.8, abs=0.01)

    def test_even_median(self):
        assert time_stats(np.array([5.0, 1.0, 3.0, 100.0]))[2] == 4.0

    @pytest.mark.parametrize(
        "x,expected",
        [([1, -1, 1, -1], 3), ([1, 0, -1], 0), ([0, 0, 0], 0), ([-2, 3], 1), ([1, 0, 0, 1], 0), ([3, 2, 1], 0)],
    )
    def test_zero_crossings_strict(self, x, expected):
        assert zero_crossings(np.array(x, dtype=float)) == expected

    def test_too_short(self):
        with pytest.raises(DataError):
            time_stats(np.array([1.0]))


class TestGradient:
    def test_examples(self):
        np.testing.assert_array_equal(gradient(np.array([1.0, 3.0, 2.0])), [2.0, -1.0])
        np.testing.assert_array_equal(gradient(np.full(9, 4.0)), np.zeros(8))
        np.testing.assert_allclose(gradient(0.7 * np.arange(50.0) + 2), np.full(49, 0.7), rtol=1e-12)


class TestGradientPooling:
    def test_flat_counts_positive(self):
        np.testing.assert_array_equal(gradient_pooling(np.zeros(3), 1), [2, 0, 0, 0])

    def test_strictly_increasing(self):
        L = 37
        out = gradient_pooling(np.cumsum(np.random.default_rng(0).uniform(0.1, 1, L)), 1)
        assert tuple(out[:2]) == (L - 1, 0)

    def test_two_chunk_hand_example(self):
        out = gradient_pooling(np.array([1.0, 3.0, 2.0, 2.0, 0.0, 5.0]), 2)
        np.testing.assert_array_equal(out, [1, 1, 2, -1, 1, 1, 5, -2])

    def test_chunk_bounds_front_loaded(self):
        assert chunk_bounds(7, 3) == [(0, 3), (3, 5), (5, 7)]
        assert chunk_bounds(6, 2) == [(0, 3), (3, 6)]

    def test_chunks_do_not_straddle(self):
        # a jump exactly at the chunk boundary is not seen by either chunk
        x = np.array([0.0, 0.0, 0.0, 9.0, 9.0, 9.0])
        np.testing.assert_array_equal(gradient_pooling(x, 2), [2, 0, 0, 0, 2, 0, 0, 0])

    def test_too_many_chunks(self):
        with pytest.raises(ConfigError, match="too large"):
            gradient_pooling(np.arange(5.0), 3)

    @settings(max_examples=200, deadline=None)
    @given(x=signals, T=st.integers(1, 8))
    def test_identities(self, x, T):
        assume(x.size >= 2 * T)
        out = gradient_pooling(x, T).reshape(T, 4)
        for (a, b), (hp, hn, sp, sn) in zip(chunk_bounds(x.size, T), out):
            assert hp + hn == b - a - 1
            assert hp >= 0 and hn >= 0 and sp >= 0 and sn <= 0
            assert sp + sn == pytest.approx(x[b - 1] - x[a], abs=1e-12 * max(1.0, np.abs(x).max()) * (b - a))


class TestSpectrum:
    def test_constant(self):
        sp = spectrum(np.full(8, -2.0))
        np.testing.assert_allclose(sp.magnitudes, [16, 0, 0, 0, 0], atol=1e-14)
        assert sp.L == 8

    def test_bin_sinusoid(self):
        L, k = 128, 9
        n = np.arange(L)
        sp = spectrum(np.cos(2 * np.pi * k * n / L))
        assert sp.magnitudes[k] == pytest.approx(L / 2, rel=1e-12)
        others = np.delete(sp.magnitudes, k)
        assert np.max(others) < 1e-10

    def test_random_64_matches_direct_dft(self, rng):
        x = rng.standard_normal(64)
        np.testing.assert_allclose(spectrum(x).magnitudes, oracle_dft(x), rtol=1e-9, atol=1e-12)

    @settings(max_examples=60, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), L=st.integers(2, 256))
    def test_matches_dft_oracle_up_to_256(self, seed, L):
        x = np.random.default_rng(seed).standard_normal(L)
        ref = oracle_dft(x)
        got = spectrum(x).magnitudes
        assert got.size == L // 2 + 1
        assert np.all(np.abs(got - ref) <= 1e-9 * np.maximum(ref, 1.0))

    def test_window_fs_carried(self):
        sp = spectrum(make_window(np.arange(10.0), fs=25.0))
        assert sp.fs == 25.0 and sp.bin_hz == 2.5


class TestLowFreq:
    def test_long_window_coverage(self):
        fs, L = 256.0, 76800
        x = np.random.default_rng(1).standard_normal(L)
        sp = spectrum(x, fs)
        low, short = low_freq_features(sp, 200)
        np.testing.assert_array_equal(low, sp.magnitudes[:200])
        assert not short
        assert 200 * sp.bin_hz == pytest.approx(0.6667, abs=1e-4)

    def test_constant_short_list(self):
        low, short = low_freq_features(spectrum(np.full(8, 1.5)), 5)
        np.testing.assert_allclose(low, [12, 0, 0, 0, 0], atol=1e-14)
        assert not short

    def test_padding_flag(self, rng):
        sp = spectrum(rng.standard_normal(64))
        low, short = low_freq_features(sp, 300)
        assert short
        np.testing.assert_array_equal(low[:33], sp.magnitudes)
        assert np.all(low[33:] == 0) and low.size == 300

    def test_short_window_flag_in_vector(self, rng):
        fv = extract(make_window(rng.standard_normal(64)))
        assert FLAG_SHORT_WINDOW in fv.flags


class TestWholeFreq:
    def test_single_band_is_total(self, rng):
        sp = spectrum(rng.standard_normal(100))
        assert whole_freq_features(sp, 1)[0] == pytest.approx(sp.magnitudes.sum(), rel=1e-15)

    def test_random_64_four_bands_matches_oracle(self, rng):
        x = rng.standard_normal(64)
        mags = oracle_dft(x)
        ref = [sum(mags[c - 1] for c in band) for band in oracle_band_indices(64, 4)]
        np.testing.assert_allclose(whole_freq_features(spectrum(x), 4), ref, rtol=1e-9)

    def test_band_starts_literal(self):
        # L=64, N_b=4: bands start at 1-based ceil(1 + (j-1)*8) = 1, 9, 17, 25
        np.testing.assert_array_equal(band_starts(64, 4), [0, 8, 16, 24])
        # non-integer bounds round up: L=50, N_b=4 -> 1 + {0, 6.25, 12.5, 18.75}
        np.testing.assert_array_equal(band_starts(50, 4), [0, 7, 13, 19])

    def test_empty_bands_zero(self, rng):
        # 20 bands over a 6-bin spectrum: most are empty
        sp = spectrum(rng.standard_normal(10))
        out = whole_freq_features(sp, 20)
        assert np.count_nonzero(out) <= sp.magnitudes.size
        assert out.sum() == pytest.approx(sp.magnitudes.sum(), rel=1e-14)

    @settings(max_examples=150, deadline=None)
    @given(L=st.integers(2, 5000), n_bands=st.integers(1, 400))
    def test_index_partition(self, L, n_bands):
        starts = band_starts(L, n_bands)
        stops = np.append(starts[1:], L // 2 + 1)
        assert starts[0] == 0
        assert np.all(np.diff(starts) >= 0)
        covered = np.concatenate([np.arange(a, b) for a, b in zip(starts, stops)])
        np.testing.assert_array_equal(covered, np.arange(L // 2 + 1))
        oracle = [c - 1 for band in oracle_band_indices(L, n_bands) for c in band]
        assert oracle == covered.tolist()

    @settings(max_examples=100, deadline=None)
    @given(x=signals, n_bands=st.integers(1, 300))
    def test_sum_partition(self, x, n_bands):
        sp = spectrum(x)
        out = whole_freq_features(sp, n_bands)
        assert math.fsum(out) == pytest.approx(math.fsum(sp.magnitudes), rel=1e-12)


class TestExtract:
    def test_default_dim_416(self, rng):
        fv = extract(make_window(rng.standard_normal(30000), fs=100.0, label="severe", patient="P9"))
        assert fv.values.size == 416 == FeatureConfig().dim
        assert (fv.label, fv.patient_id) == ("severe", "P9")
        names = [(e.group, e.name) for e in fv.layout.entries]
        assert names[:8] == [("time", n) for n in ("min", "max", "median", "mean", "std", "energy", "kurtosis", "zero_crossing")]
        assert names[8] == ("gradient", "c0_h_pos")

    def test_time_only(self, rng):
        assert extract(make_window(rng.standard_normal(100)), FeatureConfig(include_groups=("time",))).values.size == 8

    def test_lowfreq_only(self, rng):
        cfg = FeatureConfig(n_low=10, include_groups=("lowfreq",))
        assert extract(make_window(rng.standard_normal(100)), cfg).values.size == 10

    def test_order_is_canonical(self, rng):
        x = rng.standard_normal(500)
        a = extract(make_window(x), FeatureConfig(include_groups=("wholefreq", "time")))
        b = extract(make_window(x), FeatureConfig(include_groups=("time", "wholefreq")))
        np.testing.assert_array_equal(a.values, b.values)
        np.testing.assert_array_equal(a.values[:8], time_stats(x))

    def test_bad_config(self):
        with pytest.raises(ConfigError):
            FeatureConfig(include_groups=())
        with pytest.raises(ConfigError):
            FeatureConfig(include_groups=("hrv",))
        with pytest.raises(ConfigError):
            FeatureConfig(n_low=0)

    def test_failing_window_skipped_not_zero_filled(self, rng, caplog):
        wins = [make_window(rng.standard_normal(100)), make_window(np.arange(3.0)), make_window(rng.standard_normal(80))]
        with caplog.at_level(logging.WARNING):
            out = extract_many(wins, FeatureConfig(temporal_resolution=2))
        assert len(out) == 2
        assert "skipping window" in caplog.text

    def test_deterministic(self, rng):
        win = make_window(rng.standard_normal(4000))
        assert extract(win).values.tobytes() == extract(win).values.tobytes()

    def test_matches_oracle_spot(self, rng):
        win = make_window(rng.standard_normal(1024) + 0.3)
        ref = oracle_features(win, FeatureConfig())
        scale = np.maximum(np.abs(ref.values), 1.0)
        assert np.max(np.abs(extract(win).values - ref.values) / scale) <= 1e-9


class TestAmplitudeScaling:
    @settings(max_examples=100, deadline=None)
    @given(x=signals, a=st.floats(0.01, 100.0))
    def test_scaling(self, x, a):
        cfg = FeatureConfig(n_low=20, n_bands=10)
        lay = cfg.layout()
        f1 = extract(make_window(x), cfg).values
        f2 = extract(make_window(a * x), cfg).values

        def part(v, group, name=None):
            return v[lay.slice(group, name)]

        for name in ("min", "max", "median", "mean", "std"):
            assert part(f2, "time", name)[0] == pytest.approx(a * part(f1, "time", name)[0], rel=1e-9, abs=1e-12 * a)
        assert part(f2, "time", "energy")[0] == pytest.approx(a * a * part(f1, "time", "energy")[0], rel=1e-9)
        assert part(f2, "time", "kurtosis")[0] == pytest.approx(part(f1, "time", "kurtosis")[0], rel=1e-9)
        assert part(f2, "time", "zero_crossing")[0] == part(f1, "time", "zero_crossing")[0]
        g1, g2 = part(f1, "gradient").reshape(-1, 4), part(f2, "gradient").reshape(-1, 4)
        np.testing.assert_array_equal(g2[:, :2], g1[:, :2])
        np.testing.assert_allclose(g2[:, 2:], a * g1[:, 2:], rtol=1e-9, atol=1e-9 * a * np.abs(x).max())
        for group in ("lowfreq", "wholefreq"):
            p1, p2 = part(f1, group), part(f2, group)
            np.testing.assert_allclose(p2, a * p1, rtol=1e-9, atol=1e-9 * a * np.abs(p1).max())


class TestFuse:
    def _pair(self, rng, ppg_start=0.0):
        ecg = extract(make_window(rng.standard_normal(900), fs=300.0, modality=Modality.ECG, label="s"))
        ppg = extract(make_window(rng.standard_normal(300), fs=100.0, modality=Modality.PPG, label="s",
                                  start_s=ppg_start))
        return ecg, ppg

    def test_ecg_ppg_832(self, rng):
        ecg, ppg = self._pair(rng)
        fused = fuse({Modality.PPG: ppg, Modality.ECG: ecg}, [Modality.ECG, Modality.PPG])
        assert fused.values.size == 832
        np.testing.assert_array_equal(fused.values[:416], ecg.values)
        np.testing.assert_array_equal(fused.values[416:], ppg.values)
        assert fused.layout.entries[0].group == "ECG:time"
        assert fused.layout.entries[-1].group == "PPG:wholefreq"
        assert fused.layout.total_dim == 832
        assert fused.label == "s"

    def test_single_identity(self, rng):
        ecg, _ = self._pair(rng)
        assert fuse({"ECG": ecg}) is ecg

    def test_misaligned(self, rng):
        ecg, ppg = self._pair(rng, ppg_start=0.05)
        with pytest.raises(DataError, match="misaligned"):
            fuse({"ECG": ecg, "PPG": ppg}, ["ECG", "PPG"])

    def test_within_one_slow_period_ok(self, rng):
        ecg, ppg = self._pair(rng, ppg_start=0.01)
        assert fuse({"ECG": ecg, "PPG": ppg}, ["ECG", "PPG"]).values.size == 832

    def test_patient_mismatch(self, rng):
        ecg = extract(make_window(rng.standard_normal(100), patient="A"))
        ppg = extract(make_window(rng.standard_normal(100), patient="B", modality=Modality.ECG))
        with pytest.raises(DataError):
            fuse({"PPG": ecg, "ECG": ppg}, ["ECG", "PPG"])

    def test_empty(self):
        with pytest.raises(DataError):
            fuse({})
