"""Wall-clock timing of each feature and log-log scaling of the feature groups."""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import features as F
from .core import Modality, Waveform, Window
from .preprocess import FilterConfig, preprocess
from .synth import ClassProfile, beat_times, synth_channel

DEFAULT_SIZES = tuple(2 ** k for k in range(10, 21))


@dataclass(frozen=True)
class TimingRow:
    group: str
    feature: str
    median_ms: float
    mean_ms: float
    runs: int


def benchmark_signal(fs: float = 100.0, duration_s: float = 300.0, seed: int = 0) -> Window:
    """A preprocessed ~5 minute PPG-like window."""
    rng = np.random.default_rng(seed)
    profile = ClassProfile(base_bpm=80.0, rate_sigma=0.05, noise_sigma=0.03)
    x = synth_channel(profile, Modality.PPG, fs, duration_s, beat_times(profile, duration_s, rng), rng)
    w = preprocess(Waveform(x, fs, Modality.PPG, "bench"), FilterConfig())
    return Window(w.samples, fs, Modality.PPG, "bench")


def time_call(fn: Callable[[], object], runs: int = 30, warmup: int = 3) -> np.ndarray:
    """Per-call wall times in seconds after ``warmup`` discarded calls."""
    for _ in range(warmup):
        fn()
    out = np.empty(runs)
    for i in range(runs):
        t0 = time.perf_counter()
        fn()
        out[i] = time.perf_counter() - t0
    return out


def feature_table(win: Window, cfg: F.FeatureConfig = F.FeatureConfig(), runs: int = 30) -> tuple[list[TimingRow], TimingRow]:
    """Per-feature rows in the Time/Frequency layout, plus the full-extraction row."""
    x = win.samples
    T = cfg.temporal_resolution
    cases = [
        ("Time", "Mean", lambda: F.mean(x)),
        ("Time", "STD", lambda: F.std(x)),
        ("Time", "Zero-crossing", lambda: F.zero_crossings(x)),
        ("Time", "Minimum", lambda: F.minimum(x)),
        ("Time", "Maximum", lambda: F.maximum(x)),
        ("Time", "Median", lambda: F.median(x)),
        ("Time", "Energy", lambda: F.energy(x)),
        ("Time", "Kurtosis", lambda: F.kurtosis(x)),
        ("Time", "Gradient", lambda: F.gradient_pooling(x, T)),
        ("Frequency", "Low Freq.", lambda: F.low_freq_features(F.spectrum(x), cfg.n_low)),
        ("Frequency", "Whole Freq.", lambda: F.whole_freq_features(F.spectrum(x), cfg.n_bands)),
    ]
    rows = []
    for group, name, fn in cases:
        t = time_call(fn, runs) * 1e3
        rows.append(TimingRow(group, name, float(np.median(t)), float(np.mean(t)), runs))
    t = time_call(lambda: F.extract(win, cfg), runs) * 1e3
    total = TimingRow("All", "Full extraction", float(np.median(t)), float(np.mean(t)), runs)
    return rows, total


SCALING_GROUPS: dict[str, Callable] = {
    "time": lambda x, cfg: F.time_stats(x),
    "gradient": lambda x, cfg: F.gradient_pooling(x, cfg.temporal_resolution),
    "frequency": lambda x, cfg: (
        F.low_freq_features(F.spectrum(x), cfg.n_low),
        F.whole_freq_features(F.spectrum(x), cfg.n_bands),
    ),
}


def scaling_sweep(
    sizes: Sequence[int] = DEFAULT_SIZES,
    cfg: F.FeatureConfig = F.FeatureConfig(),
    seed: int = 0,
    budget_s: float = 0.05,
) -> tuple[dict[str, list[float]], dict[str, float]]:
    """Median time per group and size, and the fitted log-log slope per group.

    The number of runs per size is chosen so each size costs roughly ``budget_s``.
    """
    rng = np.random.default_rng(seed)
    times: dict[str, list[float]] = {g: [] for g in SCALING_GROUPS}
    for L in sizes:
        x = rng.standard_normal(int(L))
        for g, fn in SCALING_GROUPS.items():
            probe = time_call(lambda: fn(x, cfg), runs=1, warmup=1)[0]
            runs = int(np.clip(budget_s / max(probe, 1e-7), 5, 200))
            times[g].append(float(np.median(time_call(lambda: fn(x, cfg), runs=runs))))
    logL = np.log(np.asarray(sizes, dtype=np.float64))
    slopes = {g: float(np.polyfit(logL, np.log(t), 1)[0]) for g, t in times.items()}
    return times, slopes


def format_table(rows: list[TimingRow], total: TimingRow) -> str:
    lines = [f"{'Feature group':<14}{'Feature':<16}{'Elapsed (ms)':>14}{'mean':>10}"]
    lines.append("-" * len(lines[0]))
    for r in rows:
        lines.append(f"{r.group:<14}{r.feature:<16}{r.median_ms:>14.3f}{r.mean_ms:>10.3f}")
    lines.append("-" * len(lines[0]))
    lines.append(f"{'Sum of rows':<30}{sum(r.median_ms for r in rows):>14.3f}")
    lines.append(f"{total.feature:<30}{total.median_ms:>14.3f}{total.mean_ms:>10.3f}")
    return "\n".join(lines)
