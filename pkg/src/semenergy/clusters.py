"""Class mean-activation vectors: initialization and per-batch EMA updates.

The matrix holds one mean logit vector per class (K rows of dimension K).
Means are computed from labelled in-distribution samples only, initialized
after warmup and updated each mini-batch by exponential moving average; the
scorers treat them as constants.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DimensionError, LabelError

DEFAULT_EMA_DECAY = 0.99


@dataclass
class ClusterMeans:
    matrix: np.ndarray                 # (K, K), row i = mean logit vector of class i
    ema_decay: float = DEFAULT_EMA_DECAY
    counts: np.ndarray | None = None   # per-class sample totals from initialization

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=np.float64)
        if self.matrix.ndim != 2 or self.matrix.shape[0] != self.matrix.shape[1]:
            raise DimensionError(
                f"cluster means must be a square (K, K) matrix, got {self.matrix.shape}")
        if not np.all(np.isfinite(self.matrix)):
            raise DimensionError("cluster means contain non-finite entries")
        if not (0.0 < self.ema_decay < 1.0):
            raise ConfigError(f"ema_decay must lie in (0, 1), got {self.ema_decay}")

    @property
    def num_classes(self) -> int:
        return self.matrix.shape[0]


def _check_labels(labels: np.ndarray, num_classes: int) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
        bad = labels[(labels < 0) | (labels >= num_classes)][0]
        raise LabelError(f"label {bad} outside 0..{num_classes - 1}")
    return labels.astype(np.intp)


def init_means(logits: np.ndarray, labels, ema_decay: float = DEFAULT_EMA_DECAY) -> ClusterMeans:
    """Arithmetic per-class mean of logit vectors; every class must appear.

    Sums run in fixed index order for reproducibility.
    """
    logits = np.asarray(logits, dtype=np.float64)
    if logits.ndim != 2 or logits.shape[0] == 0:
        raise DimensionError(f"expected a nonempty (N, K) logit matrix, got {logits.shape}")
    k = logits.shape[1]
    labels = _check_labels(labels, k)
    if labels.shape[0] != logits.shape[0]:
        raise DimensionError("logits and labels disagree in length")

    sums = np.zeros((k, k))
    counts = np.zeros(k, dtype=np.int64)
    for row, label in zip(logits, labels):
        sums[label] += row
        counts[label] += 1
    missing = np.flatnonzero(counts == 0)
    if missing.size:
        raise ValueError(f"cannot initialize cluster means: class {missing[0]} has no samples")
    return ClusterMeans(sums / counts[:, None], ema_decay=ema_decay, counts=counts)


def ema_update(means: ClusterMeans, logits: np.ndarray, labels) -> ClusterMeans:
    """One EMA step: M_i <- d*M_i + (1-d)*batch_mean_i for classes in the batch.

    Classes absent from the batch keep their row unchanged. Only labelled
    in-distribution samples belong here.
    """
    logits = np.asarray(logits, dtype=np.float64)
    if logits.ndim != 2 or logits.shape[1] != means.num_classes:
        raise DimensionError(
            f"expected (B, {means.num_classes}) logits, got {logits.shape}")
    labels = _check_labels(labels, means.num_classes)
    if labels.shape[0] != logits.shape[0]:
        raise DimensionError("logits and labels disagree in length")

    d = means.ema_decay
    matrix = means.matrix.copy()
    for cls in np.unique(labels):
        batch_mean = logits[labels == cls].mean(axis=0)
        matrix[cls] = d * matrix[cls] + (1.0 - d) * batch_mean
    return ClusterMeans(matrix, ema_decay=d, counts=means.counts)
