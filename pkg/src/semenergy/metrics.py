"""Detection metrics: FPR at fixed TPR, AUROC, AUPR, and score overlap.

All metrics work on detection scores (higher = more in-distribution). AUROC
uses the rank statistic with half credit for ties, which matches the
all-pairs count P(in > out) + 0.5 * P(in == out) exactly. AUPR integrates
the precision-recall curve step-wise, processing tied scores as a single
threshold step.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .scoring import DetectorThreshold, threshold_at_tpr

DEFAULT_OVERLAP_BINS = 100


@dataclass(frozen=True)
class ScoredSample:
    score: float    # detection score -E, higher = more in-distribution
    is_in: bool


@dataclass(frozen=True)
class EvalReport:
    fpr95: float
    auroc: float
    aupr: float
    overlap: float
    tau: float
    n_in: int
    n_out: int

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=2) + "\n"


def _split_scores(samples: list[ScoredSample]) -> tuple[np.ndarray, np.ndarray]:
    in_scores = np.array([s.score for s in samples if s.is_in])
    out_scores = np.array([s.score for s in samples if not s.is_in])
    if in_scores.size == 0 or out_scores.size == 0:
        raise ValueError("both in- and out-distribution samples are required")
    return in_scores, out_scores


def fpr_at_tpr(samples: list[ScoredSample], target_tpr: float) -> tuple[float, DetectorThreshold]:
    """Fraction of out-samples above the in-calibrated threshold, plus that threshold.

    Shares the threshold rule with the deployable detector, so the reported
    rate and the detector agree by construction.
    """
    in_scores, out_scores = _split_scores(samples)
    tau = threshold_at_tpr(in_scores, target_tpr)
    return float(np.mean(out_scores > tau)), DetectorThreshold(tau)


def _average_ranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks with tied values sharing the mean rank of their group."""
    order = np.argsort(values, kind="mergesort")
    ranks = np.empty(values.size, dtype=np.float64)
    i = 0
    while i < values.size:
        j = i + 1
        while j < values.size and values[order[j]] == values[order[i]]:
            j += 1
        ranks[order[i:j]] = (i + 1 + j) / 2.0
        i = j
    return ranks


def auroc(samples: list[ScoredSample]) -> float:
    """P(random in-score > random out-score) + 0.5 * P(equal)."""
    in_scores, out_scores = _split_scores(samples)
    pooled = np.concatenate([in_scores, out_scores])
    ranks = _average_ranks(pooled)
    n_in, n_out = in_scores.size, out_scores.size
    u = ranks[:n_in].sum() - n_in * (n_in + 1) / 2.0
    return float(u / (n_in * n_out))


def aupr(samples: list[ScoredSample], positive: str = "in") -> float:
    """Step-wise area under the precision-recall curve.

    positive selects which side counts as the positive class; "out" scores
    the detector as an outlier-flagging classifier instead.
    """
    if positive not in ("in", "out"):
        raise ValueError(f"positive must be 'in' or 'out', got {positive!r}")
    in_scores, out_scores = _split_scores(samples)
    if positive == "in":
        pos, neg = in_scores, out_scores
    else:
        pos, neg = -out_scores, -in_scores

    n_pos = pos.size
    scores = np.concatenate([pos, neg])
    labels = np.concatenate([np.ones(pos.size, dtype=bool), np.zeros(neg.size, dtype=bool)])
    order = np.argsort(scores, kind="mergesort")[::-1]
    scores, labels = scores[order], labels[order]

    area = 0.0
    recall_prev = 0.0
    tp = fp = 0
    i = 0
    while i < scores.size:
        j = i + 1
        while j < scores.size and scores[j] == scores[i]:
            j += 1
        tp += int(np.sum(labels[i:j]))
        fp += (j - i) - int(np.sum(labels[i:j]))
        recall = tp / n_pos
        precision = tp / (tp + fp)
        area += (recall - recall_prev) * precision
        recall_prev = recall
        i = j
    return float(area)


def score_histograms(in_scores, out_scores, bins: int = DEFAULT_OVERLAP_BINS):
    """Per-distribution histograms over the joint range, each normalized to sum 1.

    Returns (bin_centers, h_in, h_out).
    """
    in_scores = np.asarray(in_scores, dtype=np.float64).reshape(-1)
    out_scores = np.asarray(out_scores, dtype=np.float64).reshape(-1)
    if in_scores.size == 0 or out_scores.size == 0:
        raise ValueError("both score lists must be nonempty")
    if bins < 1:
        raise ValueError(f"bins must be positive, got {bins}")
    lo = min(in_scores.min(), out_scores.min())
    hi = max(in_scores.max(), out_scores.max())
    if lo == hi:
        lo, hi = lo - 0.5, hi + 0.5
    h_in, edges = np.histogram(in_scores, bins=bins, range=(lo, hi))
    h_out, _ = np.histogram(out_scores, bins=bins, range=(lo, hi))
    centers = (edges[:-1] + edges[1:]) / 2.0
    return centers, h_in / in_scores.size, h_out / out_scores.size


def overlap_coefficient(in_scores, out_scores, bins: int = DEFAULT_OVERLAP_BINS) -> float:
    """Histogram intersection of the two score distributions, in [0, 1]."""
    _, h_in, h_out = score_histograms(in_scores, out_scores, bins)
    return float(np.sum(np.minimum(h_in, h_out)))


def evaluate(samples: list[ScoredSample], target_tpr: float = 0.95,
             bins: int = DEFAULT_OVERLAP_BINS, aupr_positive: str = "in") -> EvalReport:
    """Full evaluation bundle over one scored sample set."""
    in_scores = [s.score for s in samples if s.is_in]
    out_scores = [s.score for s in samples if not s.is_in]
    fpr, tau = fpr_at_tpr(samples, target_tpr)
    return EvalReport(
        fpr95=fpr,
        auroc=auroc(samples),
        aupr=aupr(samples, positive=aupr_positive),
        overlap=overlap_coefficient(in_scores, out_scores, bins),
        tau=tau.tau,
        n_in=len(in_scores),
        n_out=len(out_scores),
    )
