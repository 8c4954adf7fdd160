"""Training objectives with analytic gradients w.r.t. logits.

Includes cross-entropy, the cluster focal loss (a focal-style loss on the
softmax of scaled cosine similarities to the class means), the inter-intra
baseline, the dual-margin squared hinge on energy scores, and a linear
combiner for the joint objective. Cluster means are treated as constants
everywhere: no gradient flows into them, they are updated only by EMA.

Batch reductions are arithmetic means throughout.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .clusters import ClusterMeans
from .errors import ConfigError, DimensionError, LabelError
from .numerics import (
    as_vector,
    check_temperature,
    cosine_similarity_chain,
    cosine_similarity_rows,
    logsumexp_rows,
    softmax_rows,
)

DEFAULT_CFL_SCALE = 10.0


@dataclass
class LossValue:
    """A scalar loss plus its gradient w.r.t. the logits it was computed from.

    grad_logits matches the shape of the logits argument: (K,) for per-sample
    losses, (B, K) for batch losses. grad_hidden, when present, carries extra
    gradient w.r.t. hidden activations (multi-layer energy terms).
    """

    value: float
    grad_logits: np.ndarray
    grad_hidden: list[np.ndarray] | None = None


@dataclass
class HingeLossValue:
    """Dual-margin hinge loss with gradients w.r.t. each input score."""

    value: float
    grad_score_in: np.ndarray
    grad_score_out: np.ndarray


@dataclass(frozen=True)
class MarginConfig:
    m_in: float = -25.0
    m_out: float = -7.0

    def __post_init__(self):
        if not (np.isfinite(self.m_in) and np.isfinite(self.m_out)):
            raise ConfigError("margins must be finite")


@dataclass(frozen=True)
class FocalConfig:
    gamma: float = 2.0
    alpha: float | tuple[float, ...] = 1.0   # scalar or per-class weights in [0, 1]

    def __post_init__(self):
        if self.gamma < 0.0:
            raise ConfigError(f"gamma must be >= 0, got {self.gamma}")
        alpha = np.atleast_1d(np.asarray(self.alpha, dtype=np.float64))
        if np.any(alpha < 0.0) or np.any(alpha > 1.0):
            raise ConfigError(f"alpha weights must lie in [0, 1], got {self.alpha}")

    def alpha_for(self, labels: np.ndarray, num_classes: int) -> np.ndarray:
        alpha = np.atleast_1d(np.asarray(self.alpha, dtype=np.float64))
        if alpha.size == 1:
            return np.full(np.shape(labels), alpha[0])
        if alpha.size != num_classes:
            raise ConfigError(
                f"per-class alpha has {alpha.size} entries for {num_classes} classes")
        return alpha[labels]


def _check_label(label: int, num_classes: int) -> int:
    label = int(label)
    if not 0 <= label < num_classes:
        raise LabelError(f"label {label} outside 0..{num_classes - 1}")
    return label


def cross_entropy(logits, label: int, t: float = 1.0) -> LossValue:
    """-log softmax(logits, t)[label]; gradient (softmax - onehot)/t."""
    logits = as_vector(logits)
    value, grads = cross_entropy_batch(logits[None, :], [_check_label(label, logits.size)], t)
    return LossValue(float(value[0]), grads[0])


def cross_entropy_batch(logits: np.ndarray, labels, t: float = 1.0):
    """Per-sample cross-entropy values (B,) and gradients (B, K)."""
    logits = np.asarray(logits, dtype=np.float64)
    t = check_temperature(t)
    labels = np.asarray(labels, dtype=np.intp)
    if labels.size and (labels.min() < 0 or labels.max() >= logits.shape[1]):
        raise LabelError(f"labels must lie in 0..{logits.shape[1] - 1}")
    log_p = logits / t - logsumexp_rows(logits, t)[:, None]
    values = -log_p[np.arange(logits.shape[0]), labels]
    grads = np.exp(log_p)
    grads[np.arange(logits.shape[0]), labels] -= 1.0
    return values, grads / t


def focal_term(s: float, gamma: float, alpha: float = 1.0) -> float:
    """-alpha * (1 - s)^gamma * log(s) for a confidence s in (0, 1]."""
    if not 0.0 < s <= 1.0:
        raise ValueError(f"confidence must lie in (0, 1], got {s}")
    return -alpha * (1.0 - s) ** gamma * np.log(s)


def cluster_focal_loss(logits, label: int, means: ClusterMeans, cfg: FocalConfig,
                       scale: float = DEFAULT_CFL_SCALE) -> LossValue:
    """Focal loss on the softmax of scaled cosine similarities to class means."""
    logits = as_vector(logits)
    label = _check_label(label, means.num_classes)
    values, grads = cluster_focal_loss_batch(logits[None, :], [label], means, cfg, scale)
    return LossValue(float(values[0]), grads[0])


def cluster_focal_loss_batch(logits: np.ndarray, labels, means: ClusterMeans,
                             cfg: FocalConfig, scale: float = DEFAULT_CFL_SCALE):
    """Per-sample cluster-focal values (B,) and gradients (B, K).

    For each sample: sim_i = cos(logits, M_i), S = softmax(scale*sim)[label],
    value = -alpha_label * (1 - S)^gamma * log S. The means are constants.
    """
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.intp)
    if scale <= 0.0:
        raise ConfigError(f"similarity scale must be positive, got {scale}")
    if logits.shape[1] != means.num_classes:
        raise DimensionError(
            f"logit dimension {logits.shape[1]} != number of classes {means.num_classes}")
    if labels.size and (labels.min() < 0 or labels.max() >= means.num_classes):
        raise LabelError(f"labels must lie in 0..{means.num_classes - 1}")

    b = logits.shape[0]
    rows = np.arange(b)
    alpha = cfg.alpha_for(labels, means.num_classes)
    sims = cosine_similarity_rows(logits, means.matrix)
    probs = softmax_rows(scale * sims)
    p = probs[rows, labels]

    q = 1.0 - p
    values = -alpha * q ** cfg.gamma * np.log(p)

    if cfg.gamma == 0.0:
        dv_dp = -alpha / p
    else:
        # The q == 0 branch is the (zero) limit of the derivative as p -> 1.
        safe_q = np.where(q > 0.0, q, 1.0)
        dv_dp = (cfg.gamma * alpha * safe_q ** (cfg.gamma - 1.0) * np.log(p)
                 - alpha * safe_q ** cfg.gamma / p)
        dv_dp = np.where(q > 0.0, dv_dp, 0.0)

    # dp/d(scale*sim_j) = p * (onehot_j - probs_j)
    coeff = -probs
    coeff[rows, labels] += 1.0
    coeff *= (dv_dp * p)[:, None] * scale
    grads = cosine_similarity_chain(logits, means.matrix, coeff)
    return values, grads


def ii_loss(logits: np.ndarray, labels, means: ClusterMeans) -> LossValue:
    """Intra-class spread minus minimal inter-class separation.

    value = mean_i |f_i - M_{y_i}|^2 - min_{a != b} |M_a - M_b|^2, with
    gradients w.r.t. the logits only. Serves as the clustering baseline.
    """
    logits = np.asarray(logits, dtype=np.float64)
    if logits.ndim != 2 or logits.shape[0] == 0:
        raise ValueError("ii loss needs a nonempty batch of logits")
    if means.num_classes < 2:
        raise ConfigError("ii loss needs at least two classes")
    if logits.shape[1] != means.num_classes:
        raise DimensionError(
            f"logit dimension {logits.shape[1]} != number of classes {means.num_classes}")
    labels = np.asarray(labels, dtype=np.intp)
    if labels.min() < 0 or labels.max() >= means.num_classes:
        raise LabelError(f"labels must lie in 0..{means.num_classes - 1}")

    diffs = logits - means.matrix[labels]
    intra = float(np.mean(np.sum(diffs * diffs, axis=1)))

    m = means.matrix
    pair_sq = np.sum((m[:, None, :] - m[None, :, :]) ** 2, axis=2)
    inter = float(np.min(pair_sq[~np.eye(means.num_classes, dtype=bool)]))

    grads = 2.0 * diffs / logits.shape[0]
    return LossValue(intra - inter, grads)


def semantic_energy_hinge_loss(score_in, score_out, margins: MarginConfig) -> HingeLossValue:
    """Squared dual-margin hinge on energy scores.

    mean over in-scores of max(0, E - m_in)^2 plus mean over out-scores of
    max(0, m_out - E)^2; an empty side contributes 0. Value and gradients are
    exactly zero in the satisfied-margin region.
    """
    score_in = np.asarray(score_in, dtype=np.float64).reshape(-1)
    score_out = np.asarray(score_out, dtype=np.float64).reshape(-1)
    if score_in.size == 0 and score_out.size == 0:
        raise ValueError("hinge loss needs at least one in- or out-score")

    value = 0.0
    grad_in = np.zeros_like(score_in)
    grad_out = np.zeros_like(score_out)
    if score_in.size:
        viol = np.maximum(0.0, score_in - margins.m_in)
        value += float(np.mean(viol * viol))
        grad_in = 2.0 * viol / score_in.size
    if score_out.size:
        viol = np.maximum(0.0, margins.m_out - score_out)
        value += float(np.mean(viol * viol))
        grad_out = -2.0 * viol / score_out.size
    return HingeLossValue(value, grad_in, grad_out)


def joint_objective(ce: LossValue, sem_energy: LossValue, lam: float) -> LossValue:
    """value = ce + lam * sem_energy with gradients combined linearly."""
    if lam < 0.0:
        raise ValueError(f"lambda must be nonnegative, got {lam}")
    if np.shape(ce.grad_logits) != np.shape(sem_energy.grad_logits):
        raise DimensionError("component gradients have mismatched shapes")
    grad = ce.grad_logits + lam * sem_energy.grad_logits

    grad_hidden = None
    if ce.grad_hidden is not None or sem_energy.grad_hidden is not None:
        a = ce.grad_hidden
        b = sem_energy.grad_hidden
        if a is not None and b is not None and len(a) != len(b):
            raise DimensionError("hidden gradient lists have mismatched lengths")
        n = len(a) if a is not None else len(b)
        grad_hidden = []
        for i in range(n):
            term_a = a[i] if a is not None else 0.0
            term_b = lam * b[i] if b is not None else 0.0
            grad_hidden.append(term_a + term_b)
    return LossValue(ce.value + lam * sem_energy.value, grad, grad_hidden)
