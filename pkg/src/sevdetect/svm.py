"""Kernel SVM trained with sequential minimal optimization, one-vs-all multiclass.

The binary solver works on the dual

    min_a  0.5 a^T Q a - sum(a)   s.t.  0 <= a_i <= C_i,  y^T a = 0,
    Q_ij = y_i y_j K(x_i, x_j)

and at each step updates the maximal violating pair (i, j): ``i`` maximises
``-y_t G_t`` over the indices that may move up, ``j`` minimises it over those
that may move down, with ``G = Q a - 1`` the dual gradient. It stops once
``max - min <= tolerance``, which is exactly the condition under which every
training point satisfies the KKT audit in :func:`kkt_violations` at that
tolerance. Ties in the selection are broken by a seeded permutation of the
training indices.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import ConfigError, TrainingError
from .dataio import atomic_write_text, dump_json

log = logging.getLogger(__name__)

MODEL_VERSION = 1
TAU = 1e-12


class KernelKind(str, Enum):
    LINEAR = "LINEAR"
    GAUSSIAN = "GAUSSIAN"


@dataclass(frozen=True)
class KernelSpec:
    """Kernel choice. ``gamma=None`` means the ``1 / (d * mean feature variance)`` heuristic."""

    kind: KernelKind = KernelKind.GAUSSIAN
    gamma: float | None = None

    def __post_init__(self):
        try:
            object.__setattr__(self, "kind", KernelKind(str(getattr(self.kind, "value", self.kind)).upper()))
        except ValueError:
            raise ConfigError(f"unknown kernel kind {self.kind!r}") from None
        if self.gamma is not None and not (np.isfinite(self.gamma) and self.gamma > 0):
            raise ConfigError(f"gamma must be finite and > 0, got {self.gamma}")

    def resolved(self, X: np.ndarray) -> "KernelSpec":
        if self.kind == KernelKind.LINEAR or self.gamma is not None:
            return self
        var = float(np.mean(np.var(X, axis=0))) if X.size else 0.0
        d = X.shape[1]
        return KernelSpec(self.kind, 1.0 / (d * var) if var > 0 else 1.0 / d)


@dataclass(frozen=True)
class TrainConfig:
    C: float = 1.0
    tolerance: float = 1e-3
    max_passes: int = 100_000
    seed: int = 0
    class_weighting: bool = False

    def __post_init__(self):
        if not self.C > 0:
            raise ConfigError(f"C must be > 0, got {self.C}")
        if not self.tolerance > 0:
            raise ConfigError(f"tolerance must be > 0, got {self.tolerance}")
        if self.max_passes < 1:
            raise ConfigError(f"max_passes must be >= 1, got {self.max_passes}")


def kernel_eval(a, b, k: KernelSpec) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ConfigError(f"dimension mismatch: {a.shape} vs {b.shape}")
    if k.kind == KernelKind.LINEAR:
        return float(np.dot(a, b))
    if k.gamma is None:
        raise ConfigError("gaussian kernel needs a resolved gamma")
    d = a - b
    return float(np.exp(-k.gamma * np.dot(d, d)))


def kernel_matrix(A: np.ndarray, B: np.ndarray, k: KernelSpec) -> np.ndarray:
    A = np.atleast_2d(A)
    B = np.atleast_2d(B)
    if A.shape[1] != B.shape[1]:
        raise ConfigError(f"dimension mismatch: {A.shape[1]} vs {B.shape[1]}")
    G = A @ B.T
    if k.kind == KernelKind.LINEAR:
        return G
    if k.gamma is None:
        raise ConfigError("gaussian kernel needs a resolved gamma")
    sq = np.einsum("ij,ij->i", A, A)[:, None] + np.einsum("ij,ij->i", B, B)[None, :] - 2.0 * G
    np.maximum(sq, 0.0, out=sq)
    return np.exp(-k.gamma * sq)


@dataclass(frozen=True, eq=False)
class BinaryModel:
    """Decision function ``f(x) = sum_i dual_coef_i K(sv_i, x) + bias``."""

    support_vectors: np.ndarray
    dual_coef: np.ndarray  # alpha_i * y_i
    bias: float
    kernel: KernelSpec
    C: float = 1.0
    n_iter: int = 0
    converged: bool = True

    def decision(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if self.support_vectors.shape[0] == 0:
            return np.full(X.shape[0], self.bias)
        return kernel_matrix(X, self.support_vectors, self.kernel) @ self.dual_coef + self.bias

    def mirrored(self) -> "BinaryModel":
        return BinaryModel(
            self.support_vectors, -self.dual_coef, -self.bias, self.kernel, self.C,
            self.n_iter, self.converged,
        )

    def to_dict(self) -> dict:
        return {
            "support_vectors": self.support_vectors.tolist(),
            "dual_coef": self.dual_coef.tolist(),
            "bias": float(self.bias),
            "C": float(self.C),
            "n_iter": int(self.n_iter),
            "converged": bool(self.converged),
        }

    @classmethod
    def from_dict(cls, d: dict, kernel: KernelSpec) -> "BinaryModel":
        sv = np.array(d["support_vectors"], dtype=np.float64)
        coef = np.array(d["dual_coef"], dtype=np.float64)
        if sv.size == 0:
            sv = sv.reshape(0, 0)
        return cls(sv, coef, float(d["bias"]), kernel, float(d["C"]), int(d["n_iter"]), bool(d["converged"]))


def _check_X(X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise TrainingError(f"expected a non-empty 2-D feature matrix, got shape {X.shape}")
    bad = np.flatnonzero(~np.all(np.isfinite(X), axis=1))
    if bad.size:
        raise TrainingError(f"non-finite feature in row {bad[0]}")
    return X


def _smo(K: np.ndarray, y: np.ndarray, Cs: np.ndarray, tol: float, max_iter: int, order: np.ndarray):
    """Solve the dual on a precomputed kernel matrix. Indices follow ``order``."""
    K = K[np.ix_(order, order)]
    y = y[order]
    Cs = Cs[order]
    n = y.size
    alpha = np.zeros(n)
    G = -np.ones(n)
    QD = np.diag(K).copy()
    pos = y > 0
    it = 0
    converged = False
    while it < max_iter:
        at_lo = alpha <= 0.0
        at_hi = alpha >= Cs
        up = np.where(pos, ~at_hi, ~at_lo)
        low = np.where(pos, ~at_lo, ~at_hi)
        score = -y * G
        if not up.any() or not low.any():
            converged = True
            break
        i = int(np.argmax(np.where(up, score, -np.inf)))
        j = int(np.argmin(np.where(low, score, np.inf)))
        if score[i] - score[j] <= tol:
            converged = True
            break
        it += 1
        Ki, Kj = K[i], K[j]
        Ci, Cj = Cs[i], Cs[j]
        ai_old, aj_old = alpha[i], alpha[j]
        quad = QD[i] + QD[j] - 2.0 * Ki[j]
        quad = quad if quad > 0 else TAU
        if y[i] != y[j]:
            delta = (-G[i] - G[j]) / quad
            diff = ai_old - aj_old
            ai, aj = ai_old + delta, aj_old + delta
            if diff > 0:
                if aj < 0:
                    aj, ai = 0.0, diff
            elif ai < 0:
                ai, aj = 0.0, -diff
            if diff > Ci - Cj:
                if ai > Ci:
                    ai, aj = Ci, Ci - diff
            elif aj > Cj:
                aj, ai = Cj, Cj + diff
        else:
            delta = (G[i] - G[j]) / quad
            total = ai_old + aj_old
            ai, aj = ai_old - delta, aj_old + delta
            if total > Ci:
                if ai > Ci:
                    ai, aj = Ci, total - Ci
            elif aj < 0:
                aj, ai = 0.0, total
            if total > Cj:
                if aj > Cj:
                    aj, ai = Cj, total - Cj
            elif ai < 0:
                ai, aj = 0.0, total
        alpha[i], alpha[j] = ai, aj
        # G += Q[:, i] dai + Q[:, j] daj,  Q[:, t] = y y_t K[:, t]
        G += y * (Ki * (y[i] * (ai - ai_old)) + Kj * (y[j] * (aj - aj_old)))
    # bias from free vectors, else midpoint of the feasible interval
    score = -y * G
    free = (alpha > 0.0) & (alpha < Cs)
    if free.any():
        b = float(np.mean(score[free]))
    else:
        at_lo = alpha <= 0.0
        at_hi = alpha >= Cs
        up = np.where(pos, ~at_hi, ~at_lo)
        low = np.where(pos, ~at_lo, ~at_hi)
        hi = score[up].max() if up.any() else np.inf
        lo = score[low].min() if low.any() else -np.inf
        if np.isfinite(hi) and np.isfinite(lo):
            b = 0.5 * (hi + lo)
        else:
            b = float(hi if np.isfinite(hi) else lo)
    inv = np.empty_like(order)
    inv[order] = np.arange(n)
    return alpha[inv], b, it, converged


def train_binary(X, y, cfg: TrainConfig = TrainConfig(), kernel: KernelSpec = KernelSpec()) -> BinaryModel:
    """Train a two-class SVM on already-normalised rows ``X`` with labels in {-1, +1}."""
    X = _check_X(X)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if y.size != X.shape[0]:
        raise TrainingError(f"{X.shape[0]} rows but {y.size} labels")
    if not np.all(np.isin(y, (-1.0, 1.0))):
        raise TrainingError("binary labels must be -1 or +1")
    n_pos = int(np.count_nonzero(y > 0))
    if n_pos == 0 or n_pos == y.size:
        raise TrainingError("binary training needs at least one example of each sign")
    kernel = kernel.resolved(X)
    Cs = np.full(y.size, float(cfg.C))
    if cfg.class_weighting:
        n = y.size
        Cs[y > 0] *= n / (2.0 * n_pos)
        Cs[y < 0] *= n / (2.0 * (n - n_pos))
    K = kernel_matrix(X, X, kernel)
    order = np.random.default_rng(cfg.seed).permutation(y.size)
    alpha, b, it, converged = _smo(K, y, Cs, cfg.tolerance, cfg.max_passes, order)
    if not converged:
        log.warning("SMO stopped after %d iterations without reaching tolerance %g", it, cfg.tolerance)
    sv = alpha > 0
    model = BinaryModel(
        support_vectors=X[sv].copy(),
        dual_coef=(alpha * y)[sv],
        bias=b,
        kernel=kernel,
        C=float(cfg.C),
        n_iter=it,
        converged=converged,
    )
    # keep the multipliers for auditing; not serialised
    object.__setattr__(model, "_alpha", alpha)
    return model


def kkt_violations(model: BinaryModel, X, y, tol: float = 1e-3, alpha=None, Cs=None) -> np.ndarray:
    """Indices of training points violating the KKT conditions at ``tol``.

    alpha == 0      =>  y f(x) >= 1 - tol
    0 < alpha < C   =>  |y f(x) - 1| <= tol
    alpha == C      =>  y f(x) <= 1 + tol
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if alpha is None:
        alpha = getattr(model, "_alpha")
    if Cs is None:
        Cs = np.full(y.size, model.C)
    m = y * model.decision(X)
    zero = alpha <= 0
    bound = alpha >= Cs
    free = ~zero & ~bound
    bad = (zero & (m < 1 - tol)) | (free & (np.abs(m - 1) > tol)) | (bound & (m > 1 + tol))
    return np.flatnonzero(bad)


@dataclass(frozen=True, eq=False)
class SvmModel:
    """Normalisation statistics plus one binary model per class (one-vs-all)."""

    classes: tuple[str, ...]
    binary_models: tuple[BinaryModel, ...]
    norm_mean: np.ndarray
    norm_std: np.ndarray
    kernel: KernelSpec
    meta: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.norm_mean.size

    def normalize(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.dim:
            raise ConfigError(f"feature dimension {X.shape[1]} does not match model dimension {self.dim}")
        return (X - self.norm_mean) / self.norm_std

    def decision_values(self, X) -> np.ndarray:
        Z = self.normalize(X)
        return np.column_stack([m.decision(Z) for m in self.binary_models])

    def predict(self, X) -> list[str]:
        # argmax returns the first maximum, i.e. ties go to the earlier class
        idx = np.argmax(self.decision_values(X), axis=1)
        return [self.classes[i] for i in idx]

    def to_dict(self) -> dict:
        return {
            "version": MODEL_VERSION,
            "kernel": {"kind": self.kernel.kind.value, "gamma": self.kernel.gamma},
            "classes": list(self.classes),
            "norm_mean": self.norm_mean.tolist(),
            "norm_std": self.norm_std.tolist(),
            "binary_models": [m.to_dict() for m in self.binary_models],
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SvmModel":
        if d.get("version") != MODEL_VERSION:
            raise ConfigError(f"unsupported model version {d.get('version')}")
        kernel = KernelSpec(d["kernel"]["kind"], d["kernel"]["gamma"])
        return cls(
            classes=tuple(d["classes"]),
            binary_models=tuple(BinaryModel.from_dict(m, kernel) for m in d["binary_models"]),
            norm_mean=np.array(d["norm_mean"], dtype=np.float64),
            norm_std=np.array(d["norm_std"], dtype=np.float64),
            kernel=kernel,
            meta=d.get("meta", {}),
        )


def fit_normalization(X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-feature z-score statistics; zero-variance features keep std 1."""
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    std = np.where(std > 0, std, 1.0)
    return mean, std


def train_ova(X, labels: Sequence, cfg: TrainConfig = TrainConfig(), kernel: KernelSpec = KernelSpec(),
              classes: Sequence[str] | None = None) -> SvmModel:
    """One binary model per class (class positive, rest negative).

    Normalisation is fitted once on ``X`` and shared. With two classes the
    second model is the exact mirror of the first.
    """
    X = _check_X(X)
    labels = [str(v) for v in labels]
    if len(labels) != X.shape[0]:
        raise TrainingError(f"{X.shape[0]} rows but {len(labels)} labels")
    present = sorted(set(labels))
    classes = tuple(classes) if classes is not None else tuple(present)
    missing = [c for c in classes if c not in present]
    if missing:
        raise TrainingError(f"classes without training examples: {missing}")
    extra = set(present) - set(classes)
    if extra:
        raise TrainingError(f"labels not in class list: {sorted(extra)}")
    if len(classes) < 2:
        raise TrainingError("need at least two classes")
    mean, std = fit_normalization(X)
    Z = (X - mean) / std
    kernel = kernel.resolved(Z)
    lab = np.array(labels)
    models = []
    for ci, c in enumerate(classes):
        if len(classes) == 2 and ci == 1:
            models.append(models[0].mirrored())
            continue
        y = np.where(lab == c, 1.0, -1.0)
        models.append(train_binary(Z, y, cfg, kernel))
    return SvmModel(tuple(classes), tuple(models), mean, std, kernel)


def save_model(model: SvmModel, path: str | Path) -> None:
    atomic_write_text(path, dump_json(model.to_dict()))


def load_model(path: str | Path) -> SvmModel:
    return SvmModel.from_dict(json.loads(Path(path).read_text()))
