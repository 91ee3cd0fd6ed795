"""Severity classification from physiological waveforms with morphology-free features."""

from .core import (
    ConfigError,
    DataError,
    FeatureLayout,
    FeatureVector,
    Modality,
    SeverityLabel,
    SevDetectError,
    TrainingError,
    Waveform,
    Window,
    merge_labels,
)
from .features import FeatureConfig, extract, fuse
from .preprocess import FilterConfig, preprocess
from .segment import SegmentConfig, segment
from .svm import KernelSpec, SvmModel, TrainConfig, train_ova

__version__ = "0.1.0"
