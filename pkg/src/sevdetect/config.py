"""Pipeline configuration: one declarative JSON file, defaults taken from the method's setup."""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .core import ConfigError, Modality
from .evaluation import EvalConfig, SplitMode
from .features import FeatureConfig
from .preprocess import FilterConfig
from .segment import SegmentConfig
from .svm import KernelKind, KernelSpec, TrainConfig
from .synth import ClassProfile, SynthConfig

# two-class corpus used by `synth` when the config has no "synth" section
DEFAULT_SYNTH = {
    "modality": "ECG",
    "fs": 300.0,
    "duration_s": 3600.0,
    "n_patients_per_class": 6,
    "format": "RAW_F64LE",
    "extra_channels": [],
    "class_profiles": {
        "moderate": {"base_bpm": 60.0, "rate_sigma": 0.08, "amp_jitter": 0.05, "noise_sigma": 0.03},
        "severe": {"base_bpm": 120.0, "rate_sigma": 0.02, "amp_jitter": 0.05, "noise_sigma": 0.03},
    },
}


def _build(cls, section: str, data: Any, **overrides):
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"config section {section!r} must be an object")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"unknown keys in config section {section!r}: {sorted(unknown)}")
    kwargs = {**data, **overrides}
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"config section {section!r}: {exc}") from None


def _plain(obj):
    if dataclasses.is_dataclass(obj):
        return {f.name: _plain(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, (Modality, KernelKind, SplitMode)) or hasattr(obj, "value"):
        return obj.value
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


def synth_from_dict(d: dict, seed: int) -> SynthConfig:
    d = dict(d)
    unknown = set(d) - {f.name for f in dataclasses.fields(SynthConfig)}
    if unknown:
        raise ConfigError(f"unknown keys in config section 'synth': {sorted(unknown)}")
    profiles = {
        str(name): _build(ClassProfile, f"synth.class_profiles.{name}", p)
        for name, p in (d.pop("class_profiles", None) or {}).items()
    }
    d["extra_channels"] = tuple(tuple(c) for c in d.get("extra_channels", ()))
    d.pop("seed", None)
    return _build(SynthConfig, "synth", d, class_profiles=profiles, seed=seed)


@dataclass(frozen=True)
class PipelineConfig:
    filter: FilterConfig = FilterConfig()
    segment: SegmentConfig = SegmentConfig()
    features: FeatureConfig = FeatureConfig()
    train: TrainConfig = TrainConfig()
    kernel: KernelSpec = KernelSpec()
    eval: EvalConfig = EvalConfig()
    # fusion order; None means "the single modality present in the manifest"
    modalities: tuple[Modality, ...] | None = None
    seed: int = 0
    synth: dict = field(default_factory=lambda: json.loads(json.dumps(DEFAULT_SYNTH)))

    @classmethod
    def from_dict(cls, d: dict | None) -> "PipelineConfig":
        d = dict(d or {})
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        seed = int(d.get("seed", 0))
        mods = d.get("modalities")
        feats = dict(d.get("features") or {})
        if "include_groups" in feats:
            feats["include_groups"] = tuple(feats["include_groups"])
        synth = d.get("synth")
        cfg = cls(
            filter=_build(FilterConfig, "filter", d.get("filter")),
            segment=_build(SegmentConfig, "segment", d.get("segment")),
            features=_build(FeatureConfig, "features", feats),
            train=_build(TrainConfig, "train", {k: v for k, v in (d.get("train") or {}).items()}, seed=seed),
            kernel=_build(KernelSpec, "kernel", d.get("kernel")),
            eval=_build(EvalConfig, "eval", d.get("eval"), seed=seed),
            modalities=None if mods is None else tuple(Modality.parse(m) for m in mods),
            seed=seed,
            synth=json.loads(json.dumps(DEFAULT_SYNTH if synth is None else synth)),
        )
        cfg.synth_config()  # validate eagerly
        return cfg

    @classmethod
    def load(cls, path: str | Path | None) -> "PipelineConfig":
        if path is None:
            return cls.from_dict({})
        try:
            doc = json.loads(Path(path).read_text())
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path}: line {exc.lineno}: {exc.msg}") from None
        if not isinstance(doc, dict):
            raise ConfigError(f"config {path}: top level must be an object")
        return cls.from_dict(doc)

    def to_dict(self) -> dict:
        d = _plain(self)
        # seed lives at top level only
        d["train"].pop("seed", None)
        d["eval"].pop("seed", None)
        return d

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()

    def override(self, **kw) -> "PipelineConfig":
        """Apply command-line overrides, re-validating through :meth:`from_dict`."""
        d = self.to_dict()
        for key, value in kw.items():
            if value is None:
                continue
            section, _, name = key.partition(".")
            if name:
                d.setdefault(section, {})[name] = value
            else:
                d[section] = value
        return PipelineConfig.from_dict(d)

    def synth_config(self) -> SynthConfig:
        return synth_from_dict(self.synth, self.seed)
