"""Morphology-free time and frequency features for a single window.

The vector for one window is the concatenation, in this order, of

* eight summary statistics (``time``),
* count/sum pooling of first differences over ``T`` temporal chunks (``gradient``),
* the first ``n_low`` one-sided FFT magnitudes (``lowfreq``),
* ``n_bands`` band sums covering the whole one-sided spectrum (``wholefreq``).

Nothing here needs beat detection, so the same code runs on ECG, PPG and IP.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .core import ConfigError, DataError, FeatureLayout, FeatureVector, LayoutEntry, Modality, Window

log = logging.getLogger(__name__)

GROUPS = ("time", "gradient", "lowfreq", "wholefreq")
TIME_STAT_NAMES = ("min", "max", "median", "mean", "std", "energy", "kurtosis", "zero_crossing")
POOL_NAMES = ("h_pos", "h_neg", "s_pos", "s_neg")

FLAG_KURTOSIS_DEGENERATE = "kurtosis_degenerate"
FLAG_SHORT_WINDOW = "short_window"


class FeatureError(DataError):
    """A window could not be turned into a feature vector."""


@dataclass(frozen=True)
class FeatureConfig:
    n_low: int = 200
    n_bands: int = 200
    temporal_resolution: int = 2
    include_groups: tuple[str, ...] = GROUPS

    def __post_init__(self):
        groups = tuple(self.include_groups)
        if not groups:
            raise ConfigError("include_groups must not be empty")
        unknown = set(groups) - set(GROUPS)
        if unknown:
            raise ConfigError(f"unknown feature groups: {sorted(unknown)}")
        # canonical order regardless of how the caller listed them
        object.__setattr__(self, "include_groups", tuple(g for g in GROUPS if g in groups))
        for name in ("n_low", "n_bands", "temporal_resolution"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")

    def layout(self) -> FeatureLayout:
        items = []
        for group in self.include_groups:
            if group == "time":
                items += [("time", n, 1) for n in TIME_STAT_NAMES]
            elif group == "gradient":
                items += [
                    ("gradient", f"c{c}_{n}", 1)
                    for c in range(self.temporal_resolution)
                    for n in POOL_NAMES
                ]
            elif group == "lowfreq":
                items.append(("lowfreq", "mag", self.n_low))
            else:
                items.append(("wholefreq", "band", self.n_bands))
        return FeatureLayout.from_widths(items)

    @property
    def dim(self) -> int:
        return self.layout().total_dim


def _as_array(x) -> np.ndarray:
    if isinstance(x, Window):
        return x.samples
    return np.asarray(x, dtype=np.float64)


def _require_len(x: np.ndarray, n: int = 2):
    if x.ndim != 1 or x.size < n:
        raise FeatureError(f"need a 1-D window of at least {n} samples, got shape {x.shape}")


# --- time-domain statistics -------------------------------------------------

def energy(x) -> float:
    x = _as_array(x)
    return float(np.dot(x, x))


def kurtosis(x) -> tuple[float, bool]:
    """Non-excess kurtosis ``L * sum(d**4) / sum(d**2)**2`` with ``d = x - mean``.

    Returns ``(value, degenerate)``; a constant signal gives ``(0.0, True)``.
    """
    x = _as_array(x)
    if x.size == 0 or x.min() == x.max():
        return 0.0, True
    d = x - x.mean()
    d2 = d * d
    m2 = d2.sum()
    if m2 == 0.0:
        return 0.0, True
    return float(x.size * np.dot(d2, d2) / (m2 * m2)), False


def zero_crossings(x) -> int:
    """Number of adjacent pairs with a strict sign change; exact zeros never count."""
    x = _as_array(x)
    a, b = x[:-1], x[1:]
    return int(np.count_nonzero(((a > 0) & (b < 0)) | ((a < 0) & (b > 0))))


def minimum(x) -> float:
    return float(_as_array(x).min())


def maximum(x) -> float:
    return float(_as_array(x).max())


def median(x) -> float:
    """Mean of the two central order statistics when the length is even."""
    return float(np.median(_as_array(x)))


def mean(x) -> float:
    x = _as_array(x)
    lo = x.min()
    # exact constant: avoid rounding noise from the summation
    return float(lo) if lo == x.max() else float(x.mean())


def std(x) -> float:
    """Population standard deviation."""
    x = _as_array(x)
    if x.min() == x.max():
        return 0.0
    d = x - x.mean()
    return float(np.sqrt(np.dot(d, d) / x.size))


def time_stats(win) -> np.ndarray:
    """min, max, median, mean, population std, energy, kurtosis, zero crossings."""
    x = _as_array(win)
    _require_len(x)
    k, _ = kurtosis(x)
    return np.array(
        [minimum(x), maximum(x), median(x), mean(x), std(x), energy(x), k, zero_crossings(x)],
        dtype=np.float64,
    )


# --- gradient pooling -------------------------------------------------------

def gradient(win) -> np.ndarray:
    x = _as_array(win)
    _require_len(x)
    return np.diff(x)


def chunk_bounds(L: int, T: int) -> list[tuple[int, int]]:
    """``T`` contiguous chunks; the first ``L % T`` chunks get one extra sample."""
    base, extra = divmod(L, T)
    bounds, start = [], 0
    for c in range(T):
        stop = start + base + (1 if c < extra else 0)
        bounds.append((start, stop))
        start = stop
    return bounds


def gradient_pooling(win, T: int = 2) -> np.ndarray:
    """Per chunk ``(h+, h-, s+, s-)``, chunk-major.

    Zero differences count as positive. ``s-`` is the signed (non-positive) sum,
    so ``s+ + s-`` telescopes to ``last - first`` of the chunk.
    """
    x = _as_array(win)
    T = int(T)
    if T < 1:
        raise ConfigError(f"temporal resolution must be >= 1, got {T}")
    _require_len(x)
    bounds = chunk_bounds(x.size, T)
    if bounds[-1][1] - bounds[-1][0] < 2:
        raise ConfigError(
            f"temporal resolution {T} too large for window of {x.size} samples "
            "(every chunk needs >= 2 samples)"
        )
    out = np.empty(4 * T, dtype=np.float64)
    for c, (a, b) in enumerate(bounds):
        g = np.diff(x[a:b])
        pos = g >= 0
        h_pos = np.count_nonzero(pos)
        out[4 * c:4 * c + 4] = (
            h_pos,
            g.size - h_pos,
            g[pos].sum(),
            g[~pos].sum(),
        )
    return out


# --- frequency domain -------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SpectrumView:
    """One-sided magnitude spectrum; ``magnitudes[0]`` is DC."""

    magnitudes: np.ndarray
    L: int
    fs: float = 1.0

    def __post_init__(self):
        if self.magnitudes.size != self.L // 2 + 1:
            raise ValueError("spectrum length must be L // 2 + 1")

    @property
    def bin_hz(self) -> float:
        return self.fs / self.L


def spectrum(win, fs: float | None = None) -> SpectrumView:
    """Magnitudes of the untapered real FFT."""
    x = _as_array(win)
    _require_len(x)
    if fs is None:
        fs = win.fs if isinstance(win, Window) else 1.0
    mags = np.abs(np.fft.rfft(x))
    mags.setflags(write=False)
    return SpectrumView(mags, x.size, float(fs))


def low_freq_features(sp: SpectrumView, n_low: int = 200) -> tuple[np.ndarray, bool]:
    """First ``n_low`` magnitudes (DC included), zero-padded when the window is short.

    Returns ``(values, short)`` where ``short`` says padding happened.
    """
    if n_low < 1:
        raise ConfigError(f"n_low must be >= 1, got {n_low}")
    mags = sp.magnitudes
    out = np.zeros(n_low, dtype=np.float64)
    k = min(n_low, mags.size)
    out[:k] = mags[:k]
    return out, n_low > mags.size


def band_starts(L: int, n_bands: int) -> np.ndarray:
    """0-based start index of each band over the one-sided spectrum.

    Band ``j`` (1-based) starts at ``ceil(1 + (j-1) L / (2 n_bands))`` in 1-based
    spectrum indexing and runs up to (not including) the next band's start; the
    last band closes at Nyquist. Integer arithmetic keeps the ceilings exact.
    """
    j = np.arange(n_bands, dtype=np.int64)
    # ceil((j * L) / (2 n_bands)) in 0-based indexing
    return -((-j * L) // (2 * n_bands))


def whole_freq_features(sp: SpectrumView, n_bands: int = 200) -> np.ndarray:
    """Sum of magnitudes inside each of ``n_bands`` consecutive bands.

    The bands partition the one-sided spectrum exactly; bands narrower than one
    bin (short windows) come out as 0.
    """
    if n_bands < 1:
        raise ConfigError(f"n_bands must be >= 1, got {n_bands}")
    mags = sp.magnitudes
    starts = band_starts(sp.L, n_bands)
    stops = np.append(starts[1:], mags.size)
    out = np.zeros(n_bands, dtype=np.float64)
    nonempty = stops > starts
    if nonempty.any():
        out[nonempty] = np.add.reduceat(mags, starts[nonempty])
    return out


# --- assembly ---------------------------------------------------------------

def extract(win: Window, cfg: FeatureConfig = FeatureConfig()) -> FeatureVector:
    """Concatenate the configured feature groups for one window."""
    x = _as_array(win)
    _require_len(x)
    parts, flags = [], set()
    sp = None
    for group in cfg.include_groups:
        if group == "time":
            stats = time_stats(x)
            if stats[0] == stats[1]:
                flags.add(FLAG_KURTOSIS_DEGENERATE)
            parts.append(stats)
        elif group == "gradient":
            parts.append(gradient_pooling(x, cfg.temporal_resolution))
        else:
            if sp is None:
                sp = spectrum(x, getattr(win, "fs", 1.0))
            if group == "lowfreq":
                low, short = low_freq_features(sp, cfg.n_low)
                if short:
                    flags.add(FLAG_SHORT_WINDOW)
                parts.append(low)
            else:
                parts.append(whole_freq_features(sp, cfg.n_bands))
    return FeatureVector(
        values=np.concatenate(parts),
        layout=cfg.layout(),
        label=getattr(win, "label", None),
        patient_id=getattr(win, "patient_id", ""),
        start_s=getattr(win, "start_s", 0.0),
        fs=getattr(win, "fs", None),
        flags=frozenset(flags),
    )


def extract_many(windows: Iterable[Window], cfg: FeatureConfig = FeatureConfig()) -> list[FeatureVector]:
    """Extract every window, skipping (and logging) the ones that fail."""
    out = []
    for win in windows:
        try:
            out.append(extract(win, cfg))
        except (FeatureError, ConfigError) as exc:
            log.warning(
                "skipping window patient=%s start=%.3fs: %s", win.patient_id, win.start_s, exc
            )
    return out


def fuse(
    vectors: Mapping["Modality | str", FeatureVector],
    order: Sequence["Modality | str"] | None = None,
) -> FeatureVector:
    """Concatenate per-modality vectors of the same window, in ``order``.

    A single modality is returned unchanged (no layout prefix).

    Raises :class:`DataError` if the windows belong to different patients or
    start more than one sample period (of the slowest modality) apart.
    """
    if not vectors:
        raise DataError("fuse needs at least one modality")
    keys = {Modality.parse(k): v for k, v in vectors.items()}
    order = [Modality.parse(m) for m in (order or keys)]
    missing = [m.value for m in order if m not in keys]
    if missing:
        raise DataError(f"missing modalities for fusion: {missing}")
    vs = [keys[m] for m in order]
    if len(vs) == 1:
        return vs[0]
    if len({v.patient_id for v in vs}) > 1:
        raise DataError("cannot fuse windows from different patients")
    rates = [v.fs for v in vs if v.fs]
    tol = 1.0 / min(rates) if rates else 0.0
    starts = [v.start_s for v in vs]
    if max(starts) - min(starts) > tol + 1e-12:
        raise DataError(
            f"misaligned windows for patient {vs[0].patient_id!r}: starts {starts} differ by more "
            f"than one sample period ({tol:g} s)"
        )
    entries, offset = [], 0
    for m, v in zip(order, vs):
        entries += [
            LayoutEntry(e.group, e.name, e.start + offset, e.stop + offset)
            for e in v.layout.prefixed(m.value).entries
        ]
        offset += v.layout.total_dim
    flags = {f"{m.value}:{f}" for m, v in zip(order, vs) for f in v.flags}
    labels = {v.label for v in vs}
    return FeatureVector(
        values=np.concatenate([v.values for v in vs]),
        layout=FeatureLayout(tuple(entries)),
        label=vs[0].label if len(labels) == 1 else None,
        patient_id=vs[0].patient_id,
        start_s=vs[0].start_s,
        fs=min(rates) if rates else None,
        flags=frozenset(flags),
    )
