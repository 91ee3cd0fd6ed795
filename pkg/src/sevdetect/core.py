"""Domain types shared across the pipeline.

Everything here is immutable after construction: sample arrays are stored as
read-only float64 numpy arrays and the dataclasses are frozen, so instances can
be handed to worker threads without copying.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping, Sequence

import numpy as np


class SevDetectError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = 1
    kind = "error"


class ConfigError(SevDetectError, ValueError):
    exit_code = 2
    kind = "config"


class DataError(SevDetectError, ValueError):
    exit_code = 3
    kind = "data"


class TrainingError(SevDetectError, RuntimeError):
    exit_code = 4
    kind = "training"


class Modality(str, Enum):
    ECG = "ECG"
    PPG = "PPG"
    IP = "IP"
    OTHER = "OTHER"

    @classmethod
    def parse(cls, value: "str | Modality") -> "Modality":
        if isinstance(value, Modality):
            return value
        try:
            return cls(str(value).upper())
        except ValueError:
            raise ConfigError(f"unknown modality {value!r}") from None


def _frozen_samples(samples) -> np.ndarray:
    arr = np.array(samples, dtype=np.float64, copy=True).reshape(-1)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Waveform:
    """A uniformly sampled single-channel recording."""

    samples: np.ndarray
    fs: float
    modality: Modality
    patient_id: str = ""
    start_time: float = 0.0

    def __post_init__(self):
        samples = _frozen_samples(self.samples)
        if samples.size == 0:
            raise DataError(f"waveform for patient {self.patient_id!r} is empty")
        bad = np.flatnonzero(~np.isfinite(samples))
        if bad.size:
            raise DataError(
                f"waveform for patient {self.patient_id!r} has non-finite sample at index {bad[0]}"
            )
        if not (self.fs > 0 and np.isfinite(self.fs)):
            raise ConfigError(f"sampling rate must be positive, got {self.fs}")
        if self.start_time < 0:
            raise ConfigError(f"start_time must be >= 0, got {self.start_time}")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "fs", float(self.fs))
        object.__setattr__(self, "modality", Modality.parse(self.modality))

    def __len__(self) -> int:
        return self.samples.size

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.fs

    def with_samples(self, samples) -> "Waveform":
        """Same metadata, new samples (used by the filtering stages)."""
        return Waveform(samples, self.fs, self.modality, self.patient_id, self.start_time)


@dataclass(frozen=True, eq=False)
class Window:
    """Contiguous slice ``[offset, offset + L)`` of a waveform.

    ``samples`` is a read-only view into the parent waveform's buffer.
    """

    samples: np.ndarray
    fs: float
    modality: Modality
    patient_id: str = ""
    label: str | None = None
    offset: int = 0
    start_s: float = 0.0

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64).reshape(-1)
        if samples.size < 2:
            raise DataError(f"window needs at least 2 samples, got {samples.size}")
        if samples.flags.writeable:
            samples = _frozen_samples(samples)
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "modality", Modality.parse(self.modality))

    @property
    def L(self) -> int:
        return self.samples.size

    @classmethod
    def from_waveform(cls, w: Waveform, offset: int, length: int, label: str | None = None) -> "Window":
        if offset < 0 or length < 2 or offset + length > len(w):
            raise DataError(
                f"window [{offset}, {offset + length}) outside waveform of {len(w)} samples"
            )
        return cls(
            samples=w.samples[offset:offset + length],
            fs=w.fs,
            modality=w.modality,
            patient_id=w.patient_id,
            label=label,
            offset=offset,
            start_s=w.start_time + offset / w.fs,
        )


@dataclass(frozen=True)
class LayoutEntry:
    group: str
    name: str
    start: int
    stop: int

    @property
    def width(self) -> int:
        return self.stop - self.start


@dataclass(frozen=True)
class FeatureLayout:
    """Maps positions of a feature vector to named feature groups."""

    entries: tuple[LayoutEntry, ...]

    def __post_init__(self):
        pos = 0
        for e in self.entries:
            if e.start != pos or e.stop <= e.start:
                raise ConfigError(f"layout entry {e.group}.{e.name} is not contiguous at {pos}")
            if "." in e.name or "." in e.group:
                raise ConfigError(f"layout names may not contain '.': {e.group}.{e.name}")
            pos = e.stop

    @property
    def total_dim(self) -> int:
        return self.entries[-1].stop if self.entries else 0

    @classmethod
    def from_widths(cls, items: Iterable[tuple[str, str, int]]) -> "FeatureLayout":
        entries, pos = [], 0
        for group, name, width in items:
            entries.append(LayoutEntry(group, name, pos, pos + width))
            pos += width
        return cls(tuple(entries))

    def prefixed(self, prefix: str) -> "FeatureLayout":
        """Same layout with every group renamed ``prefix:group``."""
        return FeatureLayout(tuple(
            LayoutEntry(f"{prefix}:{e.group}", e.name, e.start, e.stop) for e in self.entries
        ))

    def column_names(self) -> list[str]:
        return [f"{e.group}.{e.name}.{i}" for e in self.entries for i in range(e.width)]

    @classmethod
    def from_column_names(cls, names: Sequence[str]) -> "FeatureLayout":
        items: list[list] = []
        for col, name in enumerate(names):
            try:
                group, fname, idx = name.rsplit(".", 2)
                idx = int(idx)
            except ValueError:
                raise DataError(f"malformed feature column name {name!r} at column {col}") from None
            if items and items[-1][0] == group and items[-1][1] == fname and idx == items[-1][2]:
                items[-1][2] += 1
            elif idx == 0:
                items.append([group, fname, 1])
            else:
                raise DataError(f"feature column {name!r} out of sequence at column {col}")
        return cls.from_widths((g, n, w) for g, n, w in items)

    def slice(self, group: str, name: str | None = None) -> slice:
        """Index range of one entry, or of a whole group when ``name`` is None."""
        hits = [e for e in self.entries if e.group == group and (name is None or e.name == name)]
        if not hits:
            raise KeyError(f"{group}.{name}")
        return slice(hits[0].start, hits[-1].stop)

    def to_json(self) -> str:
        return json.dumps(
            [[e.group, e.name, e.start, e.stop] for e in self.entries], separators=(",", ":")
        )


@dataclass(frozen=True, eq=False)
class FeatureVector:
    values: np.ndarray
    layout: FeatureLayout
    label: str | None = None
    patient_id: str = ""
    start_s: float = 0.0
    fs: float | None = None
    flags: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        values = _frozen_samples(self.values)
        if values.size != self.layout.total_dim:
            raise DataError(
                f"feature vector has {values.size} values but layout declares {self.layout.total_dim}"
            )
        if not np.all(np.isfinite(values)):
            raise DataError(f"feature vector for patient {self.patient_id!r} has non-finite values")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "flags", frozenset(self.flags))


@dataclass(frozen=True)
class SeverityLabel:
    name: str
    ordinal: int | None = None

    def __post_init__(self):
        if not self.name:
            raise ConfigError("severity label name must be non-empty")

    def __str__(self) -> str:
        return self.name


def merge_labels(labels: Sequence, merge_map: Mapping[str, str]) -> list:
    """Rename labels according to ``merge_map`` (e.g. two sub-grades into one).

    Accepts plain strings or :class:`SeverityLabel` objects and returns the same
    kind. Every key of ``merge_map`` must occur in ``labels``.
    """
    names = [str(lab) for lab in labels]
    universe = set(names)
    for old in merge_map:
        if old not in universe:
            raise ConfigError(f"label merge key {old!r} does not occur in the dataset labels")
        if merge_map[old] in merge_map and merge_map[old] != old:
            raise ConfigError(f"label merge target {merge_map[old]!r} is itself a merge key")
    out = []
    for lab, name in zip(labels, names):
        new = merge_map.get(name, name)
        if isinstance(lab, SeverityLabel):
            out.append(SeverityLabel(new, lab.ordinal if new == name else None))
        else:
            out.append(new)
    return out
