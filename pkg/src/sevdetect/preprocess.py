"""Artefact mitigation: zero-phase high-pass followed by Gaussian smoothing."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.signal import butter, sosfiltfilt

from .core import ConfigError, Waveform

log = logging.getLogger(__name__)

# sigma * f_c at which a Gaussian's magnitude response falls to 1/sqrt(2):
# exp(-2 pi^2 sigma^2 f^2) = 2**-0.5  =>  sigma f = sqrt(ln 2) / (2 pi)
GAUSS_3DB = float(np.sqrt(np.log(2.0)) / (2.0 * np.pi))
HP_ORDER = 2
GAUSS_TRUNCATE = 4.0


@dataclass(frozen=True)
class FilterConfig:
    hp_cutoff_hz: float = 0.05
    lp_cutoff_hz: float = 150.0
    gaussian_sigma_s: float | None = None

    def __post_init__(self):
        if not (0 < self.hp_cutoff_hz < self.lp_cutoff_hz):
            raise ConfigError(
                f"need 0 < hp_cutoff_hz < lp_cutoff_hz, got {self.hp_cutoff_hz}, {self.lp_cutoff_hz}"
            )
        if self.gaussian_sigma_s is not None and not self.gaussian_sigma_s > 0:
            raise ConfigError(f"gaussian_sigma_s must be > 0, got {self.gaussian_sigma_s}")

    @property
    def sigma_s(self) -> float:
        if self.gaussian_sigma_s is not None:
            return self.gaussian_sigma_s
        return GAUSS_3DB / self.lp_cutoff_hz

    def smoothing_applies(self, fs: float) -> bool:
        """Smoothing is skipped only when the low-pass cutoff lies above Nyquist."""
        return not self.lp_cutoff_hz > fs / 2.0


def _samples(w) -> tuple[np.ndarray, float | None]:
    if isinstance(w, Waveform):
        return w.samples, w.fs
    return np.asarray(w, dtype=np.float64), None


def high_pass(w: Waveform, cutoff_hz: float, fs: float | None = None) -> Waveform:
    """Second-order Butterworth high-pass run forward and backward (zero phase).

    The forward-backward pass squares the magnitude response. Edges are padded
    by even reflection over one period of the cutoff (or the whole signal if
    shorter) to keep start-up transients small.
    """
    x, wfs = _samples(w)
    fs = fs or wfs
    if fs is None:
        raise ConfigError("sampling rate required for raw arrays")
    if not (0 < cutoff_hz < fs / 2.0):
        raise ConfigError(f"high-pass cutoff {cutoff_hz} Hz must lie in (0, {fs / 2.0}) for fs={fs}")
    sos = butter(HP_ORDER, cutoff_hz, btype="highpass", fs=fs, output="sos")
    if x.size < 2:
        y = np.zeros_like(x)
    else:
        padlen = min(x.size - 1, int(round(fs / cutoff_hz)))
        y = sosfiltfilt(sos, x, padtype="even", padlen=padlen)
    return w.with_samples(y) if isinstance(w, Waveform) else y


def gaussian_kernel(sigma_samples: float, truncate: float = GAUSS_TRUNCATE) -> np.ndarray:
    """Unit-sum sampled Gaussian on ``[-r, r]``, ``r = int(truncate * sigma + 0.5)``."""
    if not sigma_samples > 0:
        raise ConfigError(f"sigma must be > 0, got {sigma_samples}")
    r = int(truncate * sigma_samples + 0.5)
    k = np.arange(-r, r + 1, dtype=np.float64)
    g = np.exp(-0.5 * (k / sigma_samples) ** 2)
    return g / g.sum()


def gaussian_smooth(w: Waveform, sigma_s: float, fs: float | None = None) -> Waveform:
    """Convolve with a unit-sum Gaussian of ``sigma_s * fs`` samples, reflect-padded."""
    x, wfs = _samples(w)
    fs = fs or wfs
    if fs is None:
        raise ConfigError("sampling rate required for raw arrays")
    kern = gaussian_kernel(sigma_s * fs)
    r = kern.size // 2
    padded = np.pad(x, r, mode="symmetric")
    y = np.convolve(padded, kern, mode="valid")
    return w.with_samples(y) if isinstance(w, Waveform) else y


def preprocess(w: Waveform, cfg: FilterConfig = FilterConfig()) -> Waveform:
    y = high_pass(w, cfg.hp_cutoff_hz)
    if cfg.smoothing_applies(w.fs):
        y = gaussian_smooth(y, cfg.sigma_s)
    else:
        log.info(
            "%s at %g Hz: low-pass %g Hz above Nyquist, smoothing skipped",
            w.modality.value, w.fs, cfg.lp_cutoff_hz,
        )
    return y
