"""Dataset manifests, waveform files and feature tables.

Manifest (JSON)::

    {"version": 1, "format": "CSV" | "RAW_F64LE", "description": "...",
     "label_merge": {"2b1": "2b", ...},
     "records": [{"path": "p1_ecg.csv", "modality": "ECG", "fs": 300,
                  "patient_id": "p1", "label": "severe", "channel": null}, ...]}

Relative record paths resolve against the manifest's directory.

Waveform CSV: one sample per line, optionally ``timestamp,amplitude``; ``#``
starts a comment. RAW_F64LE: bare little-endian float64 samples.

Feature table: CSV whose header names each feature column ``group.name.index``
after five metadata columns. Floats are written with ``repr`` so a save/load
round trip is bit-exact.
"""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from contextlib import contextmanager
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Iterator, Mapping, Sequence

import numpy as np

from .core import ConfigError, DataError, FeatureLayout, FeatureVector, Modality, Waveform, merge_labels

MANIFEST_VERSION = 1
META_COLUMNS = ("patient_id", "label", "start_s", "fs", "flags")
# relative spread of CSV timestamp steps tolerated before refusing the file
TIMESTAMP_JITTER = 0.05


class RecordFormat(str, Enum):
    CSV = "CSV"
    RAW_F64LE = "RAW_F64LE"

    @classmethod
    def parse(cls, value) -> "RecordFormat":
        if isinstance(value, RecordFormat):
            return value
        try:
            return cls(str(value).upper())
        except ValueError:
            raise ConfigError(f"unknown record format {value!r}") from None


@dataclass(frozen=True)
class ManifestRecord:
    path: str
    modality: Modality
    fs: float
    patient_id: str
    label: str | None
    channel: int | None = None
    raw_label: str | None = None


@dataclass(frozen=True)
class DatasetManifest:
    records: tuple[ManifestRecord, ...]
    format: RecordFormat
    label_merge: Mapping[str, str] = field(default_factory=dict)
    description: str = ""
    root: Path = Path(".")

    def resolve(self, record: ManifestRecord) -> Path:
        p = Path(record.path)
        return p if p.is_absolute() else self.root / p

    def labels(self) -> list[str]:
        return sorted({r.label for r in self.records if r.label is not None})

    def patients(self) -> list[str]:
        return sorted({r.patient_id for r in self.records})


# --- atomic output ----------------------------------------------------------

def atomic_write_bytes(path: str | Path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path: str | Path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def dump_json(obj) -> str:
    """Canonical JSON: sorted keys, fixed indentation, trailing newline."""
    return json.dumps(obj, indent=1, sort_keys=True, allow_nan=False) + "\n"


@contextmanager
def output_set() -> Iterator[list]:
    """Collect paths written by a command; remove them all if the command fails."""
    written: list[Path] = []
    try:
        yield written
    except BaseException:
        for p in written:
            Path(p).unlink(missing_ok=True)
        raise


# --- manifests --------------------------------------------------------------

def _record_error(i: int, rec: Mapping, msg: str) -> DataError:
    where = f"{rec.get('patient_id', '?')}/{rec.get('modality', '?')}" if isinstance(rec, Mapping) else "?"
    return DataError(f"manifest record {i} ({where}): {msg}")


def load_manifest(path: str | Path) -> DatasetManifest:
    """Parse and validate a manifest, applying its label merge map."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except FileNotFoundError:
        raise DataError(f"manifest not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"manifest {path}: line {exc.lineno}: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise DataError(f"manifest {path}: top level must be an object")
    unknown = set(doc) - {"version", "format", "description", "label_merge", "records"}
    if unknown:
        raise DataError(f"manifest {path}: unknown keys {sorted(unknown)}")
    if doc.get("version", MANIFEST_VERSION) != MANIFEST_VERSION:
        raise DataError(f"manifest {path}: unsupported version {doc.get('version')}")
    fmt = RecordFormat.parse(doc.get("format", "CSV"))
    raw_records = doc.get("records") or []
    if not raw_records:
        raise DataError("empty manifest")
    root = path.parent
    records, seen = [], set()
    for i, rec in enumerate(raw_records):
        if not isinstance(rec, Mapping):
            raise _record_error(i, {}, "record must be an object")
        missing = {"path", "modality", "fs", "patient_id"} - set(rec)
        if missing:
            raise _record_error(i, rec, f"missing fields {sorted(missing)}")
        try:
            fs = float(rec["fs"])
        except (TypeError, ValueError):
            raise _record_error(i, rec, f"fs is not a number: {rec['fs']!r}") from None
        if not (fs > 0 and np.isfinite(fs)):
            raise _record_error(i, rec, f"fs must be > 0, got {rec['fs']}")
        try:
            modality = Modality.parse(rec["modality"])
        except ConfigError as exc:
            raise _record_error(i, rec, str(exc)) from None
        channel = rec.get("channel")
        if channel is not None:
            if fmt == RecordFormat.RAW_F64LE:
                raise _record_error(i, rec, "channel index is only supported for CSV files")
            if not isinstance(channel, int) or channel < 0:
                raise _record_error(i, rec, f"channel must be a non-negative integer, got {channel!r}")
        key = (str(rec["patient_id"]), modality, str(rec["path"]), channel)
        if key in seen:
            raise _record_error(i, rec, "duplicate (patient_id, modality, path) record")
        seen.add(key)
        file = Path(rec["path"]) if Path(rec["path"]).is_absolute() else root / rec["path"]
        if not file.is_file():
            raise _record_error(i, rec, f"file not found: {file}")
        if fmt == RecordFormat.RAW_F64LE and file.stat().st_size % 8:
            raise _record_error(i, rec, f"truncated binary file {file} ({file.stat().st_size} bytes)")
        label = rec.get("label")
        records.append(ManifestRecord(
            path=str(rec["path"]), modality=modality, fs=fs, patient_id=str(rec["patient_id"]),
            label=None if label is None else str(label), channel=channel,
            raw_label=None if label is None else str(label),
        ))
    merge = {str(k): str(v) for k, v in (doc.get("label_merge") or {}).items()}
    if merge:
        labelled = [r for r in records if r.label is not None]
        new = merge_labels([r.label for r in labelled], merge)
        it = iter(new)
        records = [replace(r, label=next(it)) if r.label is not None else r for r in records]
    return DatasetManifest(tuple(records), fmt, merge, str(doc.get("description", "")), root)


def save_manifest(manifest: DatasetManifest, path: str | Path) -> None:
    doc = {
        "version": MANIFEST_VERSION,
        "format": manifest.format.value,
        "description": manifest.description,
        "label_merge": dict(manifest.label_merge),
        "records": [
            {
                "path": r.path,
                "modality": r.modality.value,
                "fs": r.fs,
                "patient_id": r.patient_id,
                "label": r.raw_label if r.raw_label is not None else r.label,
                "channel": r.channel,
            }
            for r in manifest.records
        ],
    }
    atomic_write_text(path, dump_json(doc))


# --- waveforms --------------------------------------------------------------

def write_waveform_file(path: str | Path, samples, fmt: RecordFormat | str) -> None:
    x = np.asarray(samples, dtype=np.float64)
    if RecordFormat.parse(fmt) == RecordFormat.RAW_F64LE:
        atomic_write_bytes(path, x.astype("<f8").tobytes())
    else:
        atomic_write_text(path, "".join(f"{v!r}\n" for v in x.tolist()))


def _parse_csv_slow(path: Path, channel: int | None) -> tuple[np.ndarray, np.ndarray | None]:
    amps, stamps = [], []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            cols = [c.strip() for c in line.split(",")]
            if channel is not None:
                if channel >= len(cols):
                    raise DataError(f"{path}: line {lineno}: no column {channel}")
                cells = [cols[channel]]
            elif len(cols) in (1, 2):
                cells = cols
            else:
                raise DataError(
                    f"{path}: line {lineno}: {len(cols)} columns; set a channel index in the manifest"
                )
            try:
                vals = [float(c) for c in cells]
            except ValueError:
                raise DataError(f"{path}: line {lineno}: non-numeric value in {line!r}") from None
            if len(vals) == 2:
                stamps.append(vals[0])
            amps.append(vals[-1])
    if stamps and len(stamps) != len(amps):
        raise DataError(f"{path}: mixed one- and two-column rows")
    return np.array(amps, dtype=np.float64), (np.array(stamps) if stamps else None)


def _read_csv(path: Path, channel: int | None) -> tuple[np.ndarray, np.ndarray | None]:
    try:
        table = np.loadtxt(path, delimiter=",", comments="#", ndmin=2, dtype=np.float64)
    except ValueError:
        # slow path only to produce a line-accurate diagnostic
        return _parse_csv_slow(path, channel)
    if table.size == 0:
        return np.empty(0), None
    if channel is not None:
        if channel >= table.shape[1]:
            raise DataError(f"{path}: no column {channel}")
        return table[:, channel].copy(), None
    if table.shape[1] == 1:
        return table[:, 0].copy(), None
    if table.shape[1] == 2:
        return table[:, 1].copy(), table[:, 0].copy()
    raise DataError(f"{path}: {table.shape[1]} columns; set a channel index in the manifest")


def _check_timestamps(path: Path, stamps: np.ndarray) -> None:
    if stamps.size < 2:
        return
    steps = np.diff(stamps)
    bad = np.flatnonzero(steps <= 0)
    if bad.size:
        raise DataError(f"{path}: timestamps not strictly increasing at sample {bad[0] + 1}")
    med = np.median(steps)
    worst = np.max(np.abs(steps - med)) / med
    if worst > TIMESTAMP_JITTER:
        raise DataError(
            f"{path}: non-uniform sampling (step deviates {worst:.1%} from median); "
            "resample to a uniform grid before loading"
        )


def load_waveform(record: ManifestRecord, manifest: DatasetManifest) -> Waveform:
    path = manifest.resolve(record)
    if manifest.format == RecordFormat.RAW_F64LE:
        size = path.stat().st_size
        if size % 8:
            raise DataError(f"{path}: truncated binary file ({size} bytes is not a multiple of 8)")
        x = np.fromfile(path, dtype="<f8").astype(np.float64)
    else:
        x, stamps = _read_csv(path, record.channel)
        if stamps is not None:
            _check_timestamps(path, stamps)
    if x.size == 0:
        raise DataError(f"{path}: no samples")
    bad = np.flatnonzero(~np.isfinite(x))
    if bad.size:
        raise DataError(f"{path}: non-finite sample at index {bad[0]}")
    return Waveform(x, record.fs, record.modality, record.patient_id)


# --- feature tables ---------------------------------------------------------

def _fmt_float(v: float | None) -> str:
    return "" if v is None else repr(float(v))


def save_features(vectors: Sequence[FeatureVector], layout: FeatureLayout, path: str | Path) -> None:
    names = layout.column_names()
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([*META_COLUMNS, *names])
    for i, v in enumerate(vectors):
        if v.values.size != layout.total_dim or v.layout != layout:
            raise DataError(
                f"vector {i} has layout of dim {v.values.size}, table layout has {layout.total_dim}"
            )
        writer.writerow([
            v.patient_id,
            "" if v.label is None else v.label,
            _fmt_float(v.start_s),
            _fmt_float(v.fs),
            ";".join(sorted(v.flags)),
            *map(repr, v.values.tolist()),
        ])
    atomic_write_text(path, buf.getvalue())


def load_features(path: str | Path) -> tuple[list[FeatureVector], FeatureLayout]:
    path = Path(path)
    try:
        fh = open(path, newline="")
    except FileNotFoundError:
        raise DataError(f"feature file not found: {path}") from None
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty feature file") from None
        if tuple(header[:len(META_COLUMNS)]) != META_COLUMNS:
            raise DataError(f"{path}: header must start with {','.join(META_COLUMNS)}")
        layout = FeatureLayout.from_column_names(header[len(META_COLUMNS):])
        vectors = []
        for lineno, row in enumerate(reader, start=2):
            n_vals = len(row) - len(META_COLUMNS)
            if n_vals != layout.total_dim:
                raise DataError(
                    f"{path}: line {lineno} has {n_vals} feature values, header declares {layout.total_dim}"
                )
            pid, label, start, fs, flags = row[:len(META_COLUMNS)]
            try:
                values = np.array([float(c) for c in row[len(META_COLUMNS):]])
                start_s = float(start) if start else 0.0
                fs_v = float(fs) if fs else None
            except ValueError:
                raise DataError(f"{path}: line {lineno}: non-numeric value") from None
            vectors.append(FeatureVector(
                values=values, layout=layout, label=label or None, patient_id=pid,
                start_s=start_s, fs=fs_v, flags=frozenset(f for f in flags.split(";") if f),
            ))
    return vectors, layout
