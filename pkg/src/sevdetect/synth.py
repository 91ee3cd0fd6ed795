"""Synthetic labelled waveform corpora and brute-force reference implementations.

The generator produces quasi-periodic pulse trains whose beat rate, beat-to-beat
variability, amplitude jitter, noise and artefact bursts depend on the class.
It is a test harness, not a physiological simulator.

The ``oracle_*`` functions recompute the features with plain Python loops and a
direct DFT. They deliberately share no code with :mod:`sevdetect.features` and
exist so the fast path can be checked against something independent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Mapping

import numpy as np
from scipy.signal import fftconvolve

from .core import ConfigError, FeatureVector, Modality
from .dataio import DatasetManifest, ManifestRecord, RecordFormat, save_manifest, write_waveform_file

ORACLE_MAX_LEN = 4096


@dataclass(frozen=True)
class ClassProfile:
    """Generator knobs for one severity class.

    ``rate_sigma`` is the relative standard deviation of beat intervals and
    ``artefact_rate`` is in bursts per minute.
    """

    base_bpm: float
    rate_sigma: float = 0.03
    amp_jitter: float = 0.05
    noise_sigma: float = 0.02
    artefact_rate: float = 0.0
    artefact_duration_s: float = 2.0
    artefact_amplitude: float = 3.0

    def __post_init__(self):
        if self.base_bpm <= 0:
            raise ConfigError(f"base_bpm must be positive, got {self.base_bpm}")
        for name in ("rate_sigma", "amp_jitter", "noise_sigma", "artefact_rate"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")


@dataclass(frozen=True)
class SynthConfig:
    class_profiles: Mapping[str, ClassProfile]
    modality: Modality = Modality.ECG
    fs: float = 300.0
    duration_s: float = 1800.0
    n_patients_per_class: int = 5
    seed: int = 0
    # additional time-synchronised channels sharing the same beat times
    extra_channels: tuple[tuple[Modality, float], ...] = ()
    format: RecordFormat = RecordFormat.RAW_F64LE

    def __post_init__(self):
        if self.fs <= 0 or self.duration_s <= 0:
            raise ConfigError("fs and duration_s must be positive")
        if self.n_patients_per_class < 1:
            raise ConfigError("n_patients_per_class must be >= 1")
        if len(self.class_profiles) < 1:
            raise ConfigError("at least one class profile is required")
        profiles = list(self.class_profiles.values())
        if len(set(profiles)) != len(profiles):
            raise ConfigError("class profiles must be distinct")
        object.__setattr__(self, "modality", Modality.parse(self.modality))
        object.__setattr__(self, "format", RecordFormat.parse(self.format))
        object.__setattr__(self, "extra_channels", tuple(
            (Modality.parse(m), float(fs)) for m, fs in self.extra_channels
        ))

    @property
    def channels(self) -> list[tuple[Modality, float]]:
        return [(self.modality, float(self.fs)), *self.extra_channels]


# --- waveform shapes --------------------------------------------------------

# (offset from R peak [s], amplitude, gaussian width [s])
_ECG_WAVES = (
    (-0.20, 0.15, 0.025),
    (-0.03, -0.10, 0.010),
    (0.00, 1.00, 0.012),
    (0.03, -0.25, 0.010),
    (0.25, 0.30, 0.040),
)


def _ecg_template(fs: float) -> tuple[np.ndarray, int]:
    t = np.arange(int(-0.35 * fs), int(0.50 * fs) + 1) / fs
    tmpl = np.zeros_like(t)
    for mu, a, w in _ECG_WAVES:
        tmpl += a * np.exp(-0.5 * ((t - mu) / w) ** 2)
    return tmpl, int(0.35 * fs)


def _ppg_template(fs: float) -> tuple[np.ndarray, int]:
    t = np.arange(0, int(0.6 * fs) + 1) / fs
    systolic = np.where(t < 0.25, np.sin(np.pi * t / 0.25), 0.0)
    diastolic = np.where((t >= 0.25) & (t < 0.55), 0.35 * np.sin(np.pi * (t - 0.25) / 0.30), 0.0)
    raw = systolic + diastolic
    sigma = max(0.02 * fs, 0.5)
    k = np.arange(-int(4 * sigma + 0.5), int(4 * sigma + 0.5) + 1)
    g = np.exp(-0.5 * (k / sigma) ** 2)
    return np.convolve(raw, g / g.sum(), mode="same"), 0


def beat_times(profile: ClassProfile, duration_s: float, rng: np.random.Generator) -> np.ndarray:
    """Beat onsets in seconds with intervals ``60/bpm * (1 + rate_sigma * N(0, 1))``."""
    mean_ibi = 60.0 / profile.base_bpm
    n = int(duration_s / mean_ibi * 1.5) + 4
    ibi = mean_ibi * (1.0 + profile.rate_sigma * rng.standard_normal(n))
    ibi = np.clip(ibi, 0.3 * mean_ibi, 3.0 * mean_ibi)
    t = rng.uniform(0, mean_ibi) + np.concatenate([[0.0], np.cumsum(ibi)])
    return t[t < duration_s]


def _pulse_train(beats: np.ndarray, amps: np.ndarray, fs: float, n: int, kind: Modality) -> np.ndarray:
    tmpl, lead = _ecg_template(fs) if kind == Modality.ECG else _ppg_template(fs)
    impulses = np.zeros(n + tmpl.size)
    idx = np.round(beats * fs).astype(np.int64)
    np.add.at(impulses, idx, amps)
    full = fftconvolve(impulses, tmpl)
    return full[lead:lead + n]


def _respiration(beats: np.ndarray, fs: float, n: int) -> np.ndarray:
    # one breath every fourth beat; phase interpolated between breath onsets
    breaths = beats[::4]
    if breaths.size < 2:
        return np.zeros(n)
    t = np.arange(n) / fs
    phase = np.interp(t, breaths, 2 * np.pi * np.arange(breaths.size))
    return np.sin(phase)


def synth_channel(
    profile: ClassProfile,
    modality: Modality,
    fs: float,
    duration_s: float,
    beats: np.ndarray,
    rng: np.random.Generator,
) -> np.ndarray:
    n = int(round(duration_s * fs))
    amps = 1.0 + profile.amp_jitter * rng.standard_normal(beats.size)
    if modality == Modality.IP:
        x = _respiration(beats, fs, n)
    else:
        x = _pulse_train(beats, amps, fs, n, modality)
    t = np.arange(n) / fs
    # slow baseline drift and offset for the high-pass stage to remove
    x = x + 0.2 + 0.3 * np.sin(2 * np.pi * 0.01 * t + rng.uniform(0, 2 * np.pi))
    x = x + profile.noise_sigma * rng.standard_normal(n)
    n_bursts = rng.poisson(profile.artefact_rate * duration_s / 60.0)
    width = max(int(profile.artefact_duration_s * fs), 1)
    for start in rng.integers(0, max(n - width, 1), size=n_bursts):
        seg = slice(start, start + width)
        x[seg] += profile.artefact_amplitude * rng.standard_normal(x[seg].size)
    return x


def generate(cfg: SynthConfig, out_dir: str | Path, manifest_name: str = "manifest.json") -> DatasetManifest:
    """Write one file per patient and channel plus a manifest; return the manifest.

    Output is a pure function of ``cfg`` (including the seed).
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ext = "csv" if cfg.format == RecordFormat.CSV else "f64"
    records = []
    pid = 0
    for ci, (label, profile) in enumerate(cfg.class_profiles.items()):
        for pi in range(cfg.n_patients_per_class):
            rng = np.random.default_rng([cfg.seed, ci, pi])
            patient = f"P{pid:03d}"
            pid += 1
            beats = beat_times(profile, cfg.duration_s, rng)
            for modality, fs in cfg.channels:
                x = synth_channel(profile, modality, fs, cfg.duration_s, beats, rng)
                fname = f"{patient}_{modality.value}.{ext}"
                write_waveform_file(out_dir / fname, x, cfg.format)
                records.append(ManifestRecord(fname, modality, fs, patient, label))
    manifest = DatasetManifest(
        records=tuple(records),
        format=cfg.format,
        label_merge={},
        description=f"synthetic corpus seed={cfg.seed}",
        root=out_dir,
    )
    save_manifest(manifest, out_dir / manifest_name)
    return manifest


# --- brute-force oracles ----------------------------------------------------

def _oracle_input(x) -> list[float]:
    x = [float(v) for v in getattr(x, "samples", x)]
    if len(x) > ORACLE_MAX_LEN:
        raise ValueError(f"oracles are limited to {ORACLE_MAX_LEN} samples, got {len(x)}")
    if len(x) < 2:
        raise ValueError("oracles need at least 2 samples")
    return x


def oracle_dft(x) -> np.ndarray:
    """One-sided DFT magnitudes by direct summation, O(L^2)."""
    x = np.asarray(_oracle_input(x))
    L = x.size
    n = np.arange(L, dtype=np.int64)
    out = np.empty(L // 2 + 1)
    for k in range(L // 2 + 1):
        # reduce k*n mod L before scaling so the twiddle angles stay exact
        ang = 2.0 * np.pi * ((k * n) % L) / L
        re = float(np.dot(x, np.cos(ang)))
        im = float(np.dot(x, np.sin(ang)))
        out[k] = math.hypot(re, im)
    return out


def oracle_time_stats(x) -> list[float]:
    x = _oracle_input(x)
    L = len(x)
    lo = hi = x[0]
    total = 0.0
    for v in x:
        lo = v if v < lo else lo
        hi = v if v > hi else hi
        total += v
    s = sorted(x)
    median = s[L // 2] if L % 2 else (s[L // 2 - 1] + s[L // 2]) / 2.0
    mu = total / L
    m2 = m4 = 0.0
    e = 0.0
    for v in x:
        d = v - mu
        m2 += d * d
        m4 += d * d * d * d
        e += v * v
    if lo == hi:
        mu, m2 = lo, 0.0
    std = math.sqrt(m2 / L)
    kurt = L * m4 / (m2 * m2) if m2 > 0 else 0.0
    zc = 0
    for n in range(L - 1):
        if x[n] * x[n + 1] < 0:
            zc += 1
    return [lo, hi, median, mu, std, e, kurt, float(zc)]


def oracle_gradient_pooling(x, T: int) -> list[float]:
    x = _oracle_input(x)
    L = len(x)
    out = []
    start = 0
    for c in range(T):
        size = L // T + (1 if c < L % T else 0)
        chunk = x[start:start + size]
        start += size
        if len(chunk) < 2:
            raise ValueError("chunk too short")
        h_pos = h_neg = 0
        s_pos = s_neg = 0.0
        for n in range(len(chunk) - 1):
            g = chunk[n + 1] - chunk[n]
            if g >= 0:
                h_pos += 1
                s_pos += g
            else:
                h_neg += 1
                s_neg += g
        out += [float(h_pos), float(h_neg), s_pos, s_neg]
    return out


def oracle_band_indices(L: int, n_bands: int) -> list[list[int]]:
    """1-based spectrum indices of each band, from the interval formulas.

    Band j spans ``[ceil(sigma_i), ceil(sigma_f))`` with
    ``sigma_i = 1 + (j-1) L / (2 n_bands)`` and ``sigma_f = 1 + j L / (2 n_bands)``;
    the last band is closed at ``L // 2 + 1``.
    """
    top = L // 2 + 1
    bands = []
    for j in range(1, n_bands + 1):
        lo = math.ceil(1 + Fraction((j - 1) * L, 2 * n_bands))
        if j < n_bands:
            hi = math.ceil(1 + Fraction(j * L, 2 * n_bands)) - 1
        else:
            hi = top
        bands.append([c for c in range(lo, hi + 1) if 1 <= c <= top])
    return bands


def oracle_features(win, cfg) -> FeatureVector:
    """Reference feature vector for ``win`` under feature config ``cfg``."""
    x = _oracle_input(win)
    values: list[float] = []
    mags = None
    for group in cfg.include_groups:
        if group == "time":
            values += oracle_time_stats(x)
        elif group == "gradient":
            values += oracle_gradient_pooling(x, cfg.temporal_resolution)
        else:
            if mags is None:
                mags = oracle_dft(x)
            if group == "lowfreq":
                values += [float(mags[c - 1]) if c <= mags.size else 0.0
                           for c in range(1, cfg.n_low + 1)]
            else:
                for idx in oracle_band_indices(len(x), cfg.n_bands):
                    acc = 0.0
                    for c in idx:
                        acc += float(mags[c - 1])
                    values.append(acc)
    return FeatureVector(
        values=np.array(values),
        layout=cfg.layout(),
        label=getattr(win, "label", None),
        patient_id=getattr(win, "patient_id", ""),
    )


__all__ = [
    "ClassProfile",
    "SynthConfig",
    "generate",
    "beat_times",
    "synth_channel",
    "oracle_dft",
    "oracle_time_stats",
    "oracle_gradient_pooling",
    "oracle_band_indices",
    "oracle_features",
    "ORACLE_MAX_LEN",
]
