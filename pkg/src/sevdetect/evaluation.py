"""Confusion matrices, the five classification metrics, and repeated hold-out evaluation."""

from __future__ import annotations

import hashlib
import io
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

from .core import ConfigError, DataError
from .svm import KernelSpec, TrainConfig, train_ova

log = logging.getLogger(__name__)

METRIC_NAMES = ("A", "P", "R", "S", "F1")
REPORT_VERSION = 1


class SplitMode(str, Enum):
    SAMPLE = "sample"
    PATIENT = "patient"


@dataclass(frozen=True)
class Metrics:
    A: float
    P: float
    R: float
    S: float
    F1: float
    flags: frozenset = frozenset()

    def as_tuple(self) -> tuple[float, ...]:
        return (self.A, self.P, self.R, self.S, self.F1)


def binary_metrics(tp: int, tn: int, fp: int, fn: int) -> Metrics:
    """Accuracy, precision, recall, specificity and F1 from binary counts.

    Undefined ratios (zero denominator) are reported as 0 and named in ``flags``.
    """
    if min(tp, tn, fp, fn) < 0:
        raise ValueError("counts must be non-negative")
    total = tp + tn + fp + fn
    if total == 0:
        raise ValueError("all counts are zero")
    flags = set()

    def ratio(num, den, name):
        if den == 0:
            flags.add(f"{name}_undefined")
            return 0.0
        return num / den

    P = ratio(tp, tp + fp, "P")
    R = ratio(tp, tp + fn, "R")
    S = ratio(tn, tn + fp, "S")
    A = (tp + tn) / total
    F1 = 2 * P * R / (P + R) if P + R > 0 else 0.0
    return Metrics(A, P, R, S, F1, frozenset(flags))


@dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    """Rows are true classes, columns predicted classes."""

    counts: np.ndarray
    classes: tuple[str, ...]

    def __post_init__(self):
        c = np.asarray(self.counts, dtype=np.int64)
        k = len(self.classes)
        if c.shape != (k, k):
            raise ValueError(f"counts shape {c.shape} does not match {k} classes")
        if (c < 0).any():
            raise ValueError("counts must be non-negative")
        object.__setattr__(self, "counts", c)
        object.__setattr__(self, "classes", tuple(self.classes))

    @classmethod
    def from_labels(cls, y_true: Sequence, y_pred: Sequence, classes: Sequence[str]) -> "ConfusionMatrix":
        index = {c: i for i, c in enumerate(classes)}
        counts = np.zeros((len(classes), len(classes)), dtype=np.int64)
        for t, p in zip(y_true, y_pred):
            counts[index[str(t)], index[str(p)]] += 1
        return cls(counts, tuple(classes))

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def one_vs_rest(self, k: int) -> tuple[int, int, int, int]:
        c = self.counts
        tp = int(c[k, k])
        fn = int(c[k].sum()) - tp
        fp = int(c[:, k].sum()) - tp
        tn = self.total - tp - fn - fp
        return tp, tn, fp, fn

    def normalized(self) -> np.ndarray:
        """Row-normalised percentages; rows without samples stay at 0."""
        rows = self.counts.sum(axis=1, keepdims=True)
        return np.divide(100.0 * self.counts, rows, out=np.zeros(self.counts.shape), where=rows > 0)


def ova_metrics(cm: ConfusionMatrix) -> Metrics:
    """Macro average of the one-vs-rest binary metrics over all classes."""
    if len(cm.classes) < 2:
        raise ValueError("need at least two classes")
    per = []
    flags = set()
    for k, name in enumerate(cm.classes):
        m = binary_metrics(*cm.one_vs_rest(k))
        per.append(m.as_tuple())
        flags |= {f"{name}:{f}" for f in m.flags}
        if cm.counts[k].sum() == 0 and cm.counts[:, k].sum() == 0:
            flags.add(f"{name}:absent")
    mean = np.mean(np.array(per), axis=0)
    return Metrics(*map(float, mean), flags=frozenset(flags))


def report_metrics(cm: ConfusionMatrix, positive_label: str | None = None) -> Metrics:
    """OVA macro average, or plain binary metrics for ``positive_label`` if given."""
    if positive_label is None:
        return ova_metrics(cm)
    if len(cm.classes) != 2 or positive_label not in cm.classes:
        raise ConfigError(f"positive label {positive_label!r} needs a two-class problem containing it")
    return binary_metrics(*cm.one_vs_rest(cm.classes.index(positive_label)))


# --- splitting --------------------------------------------------------------

@dataclass(frozen=True)
class EvalConfig:
    train_frac: float = 0.8
    repeats: int = 100
    seed: int = 0
    split_mode: SplitMode = SplitMode.SAMPLE
    positive_label: str | None = None

    def __post_init__(self):
        if not 0 < self.train_frac < 1:
            raise ConfigError(f"train_frac must be in (0, 1), got {self.train_frac}")
        if self.repeats < 1:
            raise ConfigError(f"repeats must be >= 1, got {self.repeats}")
        try:
            object.__setattr__(self, "split_mode", SplitMode(str(getattr(self.split_mode, "value", self.split_mode)).lower()))
        except ValueError:
            raise ConfigError(f"unknown split mode {self.split_mode!r}") from None


def _n_test(n: int, train_frac: float) -> int:
    return min(max(int(round(n * (1.0 - train_frac))), 1), n - 1)


def stratified_split(labels: Sequence[str], train_frac: float, rng: np.random.Generator):
    """Per-class shuffle; each class contributes ``round(n_c (1 - train_frac))`` test items."""
    labels = np.asarray(labels)
    train, test = [], []
    for c in sorted(set(labels.tolist())):
        idx = np.flatnonzero(labels == c)
        if idx.size < 2:
            raise DataError(f"class {c!r} has {idx.size} sample(s); cannot split")
        perm = rng.permutation(idx)
        k = _n_test(idx.size, train_frac)
        test.append(perm[:k])
        train.append(perm[k:])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(test))


def patient_split(labels: Sequence[str], patients: Sequence[str], train_frac: float, rng: np.random.Generator):
    """Like :func:`stratified_split` but moves whole patients; a patient's class is its majority label."""
    labels = np.asarray(labels)
    patients = np.asarray(patients)
    by_class: dict[str, list[str]] = {}
    for p in sorted(set(patients.tolist())):
        labs, counts = np.unique(labels[patients == p], return_counts=True)
        by_class.setdefault(str(labs[np.argmax(counts)]), []).append(p)
    missing = set(labels.tolist()) - set(by_class)
    if missing:
        raise DataError(f"classes {sorted(missing)} are not the majority label of any patient")
    test_patients = []
    for c in sorted(by_class):
        ps = by_class[c]
        if len(ps) < 2:
            raise DataError(f"class {c!r} has {len(ps)} patient(s); patient split needs >= 2")
        perm = rng.permutation(len(ps))
        test_patients += [ps[i] for i in perm[:_n_test(len(ps), train_frac)]]
    is_test = np.isin(patients, test_patients)
    return np.flatnonzero(~is_test), np.flatnonzero(is_test)


# --- repeated evaluation ----------------------------------------------------

@dataclass(frozen=True, eq=False)
class EvalReport:
    per_repeat: tuple[Metrics, ...]
    confusion: np.ndarray  # mean row-normalised matrix, percent
    classes: tuple[str, ...]
    split_mode: SplitMode
    config_digest: str
    n_samples: int
    meta: dict = field(default_factory=dict)

    @property
    def table(self) -> np.ndarray:
        return np.array([m.as_tuple() for m in self.per_repeat])

    @property
    def mean(self) -> dict[str, float]:
        return dict(zip(METRIC_NAMES, map(float, self.table.mean(axis=0))))

    @property
    def std(self) -> dict[str, float]:
        """Population standard deviation across repeats."""
        return dict(zip(METRIC_NAMES, map(float, self.table.std(axis=0))))

    def summary_lines(self) -> list[str]:
        return [f"{k:>3}: {100 * self.mean[k]:6.2f} +- {100 * self.std[k]:5.2f} %" for k in METRIC_NAMES]

    def to_dict(self) -> dict:
        return {
            "version": REPORT_VERSION,
            "classes": list(self.classes),
            "split_mode": self.split_mode.value,
            "config_digest": self.config_digest,
            "n_samples": self.n_samples,
            "per_repeat": [
                {**dict(zip(METRIC_NAMES, m.as_tuple())), "flags": sorted(m.flags)} for m in self.per_repeat
            ],
            "mean": self.mean,
            "std": self.std,
            "confusion_percent": self.confusion.tolist(),
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        if d.get("version") != REPORT_VERSION:
            raise ConfigError(f"unsupported report version {d.get('version')}")
        return cls(
            per_repeat=tuple(
                Metrics(*(r[k] for k in METRIC_NAMES), flags=frozenset(r["flags"])) for r in d["per_repeat"]
            ),
            confusion=np.array(d["confusion_percent"], dtype=np.float64),
            classes=tuple(d["classes"]),
            split_mode=SplitMode(d["split_mode"]),
            config_digest=d["config_digest"],
            n_samples=int(d["n_samples"]),
            meta=d.get("meta", {}),
        )

    def confusion_csv(self) -> str:
        buf = io.StringIO()
        buf.write("true\\pred," + ",".join(self.classes) + "\n")
        for c, row in zip(self.classes, self.confusion):
            buf.write(c + "," + ",".join(f"{v:.4f}" for v in row) + "\n")
        return buf.getvalue()


def config_digest(*parts) -> str:
    blob = json.dumps([repr(p) for p in parts], sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _one_repeat(r, X, labels, patients, classes, cfg: EvalConfig, train_cfg: TrainConfig, kernel: KernelSpec):
    rng = np.random.default_rng(cfg.seed + r)
    if cfg.split_mode == SplitMode.PATIENT:
        tr, te = patient_split(labels, patients, cfg.train_frac, rng)
    else:
        tr, te = stratified_split(labels, cfg.train_frac, rng)
    tcfg = TrainConfig(train_cfg.C, train_cfg.tolerance, train_cfg.max_passes,
                       train_cfg.seed + r, train_cfg.class_weighting)
    train_classes = [c for c in classes if c in set(labels[tr].tolist())]
    model = train_ova(X[tr], labels[tr], tcfg, kernel, classes=train_classes)
    pred = model.predict(X[te])
    cm = ConfusionMatrix.from_labels(labels[te], pred, classes)
    return report_metrics(cm, cfg.positive_label), cm.normalized()


def repeated_split_eval(
    X,
    labels: Sequence[str],
    cfg: EvalConfig = EvalConfig(),
    train_cfg: TrainConfig = TrainConfig(),
    kernel: KernelSpec = KernelSpec(),
    patients: Sequence[str] | None = None,
    threads: int = 1,
) -> EvalReport:
    """Repeat: split (seed + r), fit normalisation and model on train, score test.

    Results are independent of ``threads``; repeats are reduced in index order.
    """
    X = np.asarray(X, dtype=np.float64)
    labels = np.array([str(v) for v in labels])
    if X.shape[0] != labels.size:
        raise DataError(f"{X.shape[0]} feature rows but {labels.size} labels")
    classes = tuple(sorted(set(labels.tolist())))
    if len(classes) < 2:
        raise DataError(f"need at least two classes, got {list(classes)}")
    for c in classes:
        n = int(np.count_nonzero(labels == c))
        if n < 2:
            raise DataError(f"class {c!r} has {n} sample(s); cannot split")
    if cfg.split_mode == SplitMode.PATIENT:
        if patients is None:
            raise ConfigError("patient split mode needs patient ids")
        patients = np.array([str(p) for p in patients])
    else:
        patients = None

    def run(r):
        return _one_repeat(r, X, labels, patients, classes, cfg, train_cfg, kernel)

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            results = list(pool.map(run, range(cfg.repeats)))
    else:
        results = [run(r) for r in range(cfg.repeats)]
    metrics = tuple(m for m, _ in results)
    confusion = np.mean([c for _, c in results], axis=0)
    return EvalReport(
        per_repeat=metrics,
        confusion=confusion,
        classes=classes,
        split_mode=cfg.split_mode,
        config_digest=config_digest(cfg, train_cfg, kernel),
        n_samples=int(labels.size),
    )
