"""Manifest -> preprocessed waveforms -> windows -> (fused) feature vectors."""

from __future__ import annotations

import logging
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .core import ConfigError, DataError, FeatureLayout, FeatureVector, Modality
from .dataio import DatasetManifest, ManifestRecord, load_waveform
from .features import extract_many, fuse
from .preprocess import preprocess
from .segment import segment

log = logging.getLogger(__name__)


@dataclass
class ExtractionResult:
    vectors: list[FeatureVector]
    layout: FeatureLayout | None
    notes: dict = field(default_factory=dict)


def _record_vectors(record: ManifestRecord, manifest: DatasetManifest, cfg) -> list[FeatureVector]:
    w = preprocess(load_waveform(record, manifest), cfg.filter)
    windows = segment(w, cfg.segment, record.label)
    return extract_many(windows, cfg.features)


def extract_manifest(manifest: DatasetManifest, cfg, threads: int = 1) -> ExtractionResult:
    """Feature vectors for every window of every selected record.

    With several modalities in ``cfg.modalities``, windows of the same patient
    are paired by index and fused in that order; patients lacking one of the
    modalities are skipped. Output is sorted by (patient_id, start time).
    """
    present = sorted({r.modality for r in manifest.records}, key=lambda m: m.value)
    order = list(cfg.modalities) if cfg.modalities else None
    if order is None:
        if len(present) != 1:
            raise ConfigError(
                f"manifest has modalities {[m.value for m in present]}; set 'modalities' in the config"
            )
        order = present
    records = [r for r in manifest.records if r.modality in order]
    if not records:
        raise DataError(f"no records of modalities {[m.value for m in order]} in manifest")

    def work(r):
        return _record_vectors(r, manifest, cfg)

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            per_record = list(pool.map(work, records))
    else:
        per_record = [work(r) for r in records]

    notes = {
        "smoothing_applied": {
            m.value: cfg.filter.smoothing_applies(r.fs) for r in records for m in [r.modality]
        },
        "window_overlap_fraction": cfg.segment.overlap_fraction,
        "spectrum": "one-sided (indices 1..L//2+1), untapered",
        "fusion_order": [m.value for m in order],
    }

    if len(order) == 1:
        vectors = [v for vs in per_record for v in vs]
    else:
        by_patient: dict[str, dict[Modality, list[FeatureVector]]] = defaultdict(dict)
        for r, vs in zip(records, per_record):
            if r.modality in by_patient[r.patient_id]:
                raise DataError(f"patient {r.patient_id} has several {r.modality.value} records")
            by_patient[r.patient_id][r.modality] = vs
        vectors, skipped = [], []
        for pid in sorted(by_patient):
            mods = by_patient[pid]
            if any(m not in mods for m in order):
                skipped.append(pid)
                continue
            n = min(len(mods[m]) for m in order)
            for k in range(n):
                vectors.append(fuse({m: mods[m][k] for m in order}, order))
        if skipped:
            log.warning("skipped patients missing a fusion modality: %s", ", ".join(skipped))
        notes["skipped_patients"] = skipped
    vectors.sort(key=lambda v: (v.patient_id, v.start_s))
    layout = vectors[0].layout if vectors else None
    return ExtractionResult(vectors, layout, notes)
