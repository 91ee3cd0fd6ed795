"""Fixed-duration windowing of (preprocessed) waveforms."""

from __future__ import annotations

import logging
from dataclasses import dataclass

from .core import ConfigError, Waveform, Window

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SegmentConfig:
    duration_s: float = 300.0
    overlap_fraction: float = 0.0
    drop_partial: bool = True

    def __post_init__(self):
        if not self.duration_s > 0:
            raise ConfigError(f"duration_s must be > 0, got {self.duration_s}")
        if not 0.0 <= self.overlap_fraction < 1.0:
            raise ConfigError(f"overlap_fraction must be in [0, 1), got {self.overlap_fraction}")

    def window_length(self, fs: float) -> int:
        L = int(round(self.duration_s * fs))
        if L < 2:
            raise ConfigError(f"window of {self.duration_s}s at {fs} Hz has fewer than 2 samples")
        return L

    def stride(self, fs: float) -> int:
        return max(1, int(round(self.window_length(fs) * (1.0 - self.overlap_fraction))))


def window_offsets(n: int, L: int, stride: int, drop_partial: bool = True) -> list[tuple[int, int]]:
    """(offset, length) pairs for a signal of ``n`` samples."""
    out = []
    start = 0
    while start + L <= n:
        out.append((start, L))
        start += stride
    if not drop_partial and start < n and n - start >= 2:
        out.append((start, n - start))
    return out


def segment(w: Waveform, cfg: SegmentConfig = SegmentConfig(), label=None) -> list[Window]:
    """Cut ``w`` into windows of ``round(duration_s * fs)`` samples.

    A waveform shorter than one window yields an empty list and a warning.
    With ``drop_partial=False`` the trailing remainder (if at least 2 samples)
    becomes one shorter window.
    """
    L = cfg.window_length(w.fs)
    label = None if label is None else str(label)
    spans = window_offsets(len(w), L, cfg.stride(w.fs), cfg.drop_partial)
    if not spans:
        log.warning(
            "patient %s %s: %d samples shorter than one %gs window (%d samples)",
            w.patient_id, w.modality.value, len(w), cfg.duration_s, L,
        )
    return [Window.from_waveform(w, off, n, label) for off, n in spans]
