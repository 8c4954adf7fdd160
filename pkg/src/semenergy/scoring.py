"""Energy scores, the threshold detector, and the score CSV format.

Energies follow the convention lower = more in-distribution. The detector
and the exported CSV work on the negated score -E (higher = in), which is
also what the threshold tau is expressed in.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass

import numpy as np

from .clusters import ClusterMeans
from .errors import ConfigError, DimensionError, ParseError
from .network import ForwardTrace
from .numerics import (
    as_vector,
    check_temperature,
    cosine_similarity_chain,
    cosine_similarity_rows,
    logsumexp,
    logsumexp_rows,
    softmax,
    softmax_rows,
)

SCORER_TAGS = ("vanilla", "semantic", "multilayer_semantic", "softmax_baseline")


@dataclass(frozen=True)
class EnergyScore:
    """A scalar energy (lower = more in-distribution) plus its producer tag."""

    value: float
    scorer: str

    def __post_init__(self):
        if self.scorer not in SCORER_TAGS:
            raise ConfigError(f"unknown scorer tag {self.scorer!r}")
        if not math.isfinite(self.value):
            raise ValueError(f"energy score must be finite, got {self.value}")

    @property
    def detection_score(self) -> float:
        """The negated energy -E; higher = more in-distribution."""
        return -self.value


@dataclass(frozen=True)
class LayerEnergyConfig:
    """Hidden layers contributing accumulated free energy, with their weights."""

    layer_indices: tuple[int, ...] = ()
    layer_weights: tuple[float, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "layer_indices", tuple(int(i) for i in self.layer_indices))
        object.__setattr__(self, "layer_weights", tuple(float(w) for w in self.layer_weights))
        if len(self.layer_indices) != len(self.layer_weights):
            raise ConfigError("layer_indices and layer_weights must have equal length")
        if any(w < 0.0 for w in self.layer_weights):
            raise ConfigError(f"layer weights must be nonnegative, got {self.layer_weights}")

    @classmethod
    def last_two_hidden(cls, num_hidden: int) -> "LayerEnergyConfig":
        return cls((num_hidden - 2, num_hidden - 1), (1.0, 1.0))


@dataclass(frozen=True)
class DetectorThreshold:
    tau: float   # same units as the negated score -E

    def __post_init__(self):
        if not math.isfinite(self.tau):
            raise ValueError(f"threshold must be finite, got {self.tau}")


class Detection(enum.Enum):
    IN_DISTRIBUTION = "in"
    OUT_OF_DISTRIBUTION = "out"


def free_energy(logits, t: float = 1.0) -> EnergyScore:
    """-t * log sum_i exp(logit_i / t)."""
    return EnergyScore(-t * logsumexp(logits, t), "vanilla")


def free_energy_batch(activations: np.ndarray, t: float = 1.0) -> np.ndarray:
    return -t * logsumexp_rows(activations, t)


def free_energy_grad(logits, t: float = 1.0) -> np.ndarray:
    """d free_energy / d logits = -softmax(logits, t)."""
    return -softmax(logits, t)


def free_energy_grad_batch(activations: np.ndarray, t: float = 1.0) -> np.ndarray:
    return -softmax_rows(activations, t)


def scaled_logits(logits, means: ClusterMeans) -> np.ndarray:
    """Z_i = cos(logits, M_i) * logit_i."""
    logits = as_vector(logits)
    return scaled_logits_batch(logits[None, :], means)[0]


def scaled_logits_batch(logits: np.ndarray, means: ClusterMeans) -> np.ndarray:
    logits = np.asarray(logits, dtype=np.float64)
    if logits.shape[1] != means.num_classes:
        raise DimensionError(
            f"logit dimension {logits.shape[1]} != number of classes {means.num_classes}")
    return cosine_similarity_rows(logits, means.matrix) * logits


def semantic_energy(logits, means: ClusterMeans, t: float = 1.0) -> EnergyScore:
    """Free energy of the similarity-weighted logits Z."""
    return EnergyScore(-t * logsumexp(scaled_logits(logits, means), t), "semantic")


def semantic_energy_batch(logits: np.ndarray, means: ClusterMeans, t: float = 1.0) -> np.ndarray:
    return -t * logsumexp_rows(scaled_logits_batch(logits, means), t)


def semantic_energy_grad(logits, means: ClusterMeans, t: float = 1.0) -> np.ndarray:
    logits = as_vector(logits)
    return semantic_energy_grad_batch(logits[None, :], means, t)[0]


def semantic_energy_grad_batch(logits: np.ndarray, means: ClusterMeans,
                               t: float = 1.0) -> np.ndarray:
    """d semantic_energy / d logits, chaining through Z and the similarities."""
    logits = np.asarray(logits, dtype=np.float64)
    check_temperature(t)
    sims = cosine_similarity_rows(logits, means.matrix)
    z = sims * logits
    p = softmax_rows(z, t)
    # dE/dZ_i = -p_i; dZ_i/df = sim_i * e_i + f_i * dsim_i/df
    return -(p * sims) + cosine_similarity_chain(logits, means.matrix, -(p * logits))


def softmax_score(logits, t: float = 1.0) -> EnergyScore:
    """Baseline score -max softmax probability, so lower = in-distribution."""
    return EnergyScore(-float(np.max(softmax(logits, t))), "softmax_baseline")


def softmax_score_batch(logits: np.ndarray, t: float = 1.0) -> np.ndarray:
    return -np.max(softmax_rows(logits, t), axis=1)


def multilayer_semantic_energy(trace: ForwardTrace, means: ClusterMeans,
                               cfg: LayerEnergyConfig, t: float = 1.0) -> EnergyScore:
    """Final-layer semantic energy plus weighted free energy of selected hidden layers."""
    total = semantic_energy(trace.logits, means, t).value
    for idx, weight in zip(cfg.layer_indices, cfg.layer_weights):
        if not 0 <= idx < len(trace.hidden):
            raise ConfigError(
                f"layer index {idx} invalid for a network with {len(trace.hidden)} hidden layers")
        total += weight * free_energy(trace.hidden[idx], t).value
    return EnergyScore(total, "multilayer_semantic")


def detect(score: EnergyScore, tau: DetectorThreshold) -> Detection:
    """In-distribution iff -E > tau; the exact boundary counts as out."""
    if -score.value > tau.tau:
        return Detection.IN_DISTRIBUTION
    return Detection.OUT_OF_DISTRIBUTION


def _ceil_count(target_tpr: float, n: int) -> int:
    """ceil(target_tpr * n), robust to the float product landing 1 ulp high."""
    x = target_tpr * n
    nearest = round(x)
    if abs(x - nearest) < 1e-9:
        return int(nearest)
    return int(math.ceil(x))


def threshold_at_tpr(detection_scores, target_tpr: float) -> float:
    """Largest tau such that at least ceil(target_tpr * n) scores exceed it.

    Works on detection scores (-E, higher = in). tau is placed one float
    below the k-th largest score, so ties at that score all pass.
    """
    scores = np.asarray(detection_scores, dtype=np.float64).reshape(-1)
    if scores.size == 0:
        raise ValueError("cannot pick a threshold from an empty score list")
    if not 0.0 < target_tpr < 1.0:
        raise ValueError(f"target TPR must lie in (0, 1), got {target_tpr}")
    k = min(max(_ceil_count(target_tpr, scores.size), 1), scores.size)
    kth = np.sort(scores)[::-1][k - 1]
    return float(np.nextafter(kth, -np.inf))


def detection_scores(scores: list[EnergyScore]) -> np.ndarray:
    """Negated energies of a homogeneous score list; mixed tags are rejected."""
    if not scores:
        raise ValueError("empty score list")
    tags = {s.scorer for s in scores}
    if len(tags) > 1:
        raise ValueError(f"mixed scorer tags in one list: {sorted(tags)}")
    return np.array([s.detection_score for s in scores])


def select_threshold(in_scores: list[EnergyScore], target_tpr: float) -> DetectorThreshold:
    """Calibrate tau on in-distribution scores so a target fraction passes."""
    return DetectorThreshold(threshold_at_tpr(detection_scores(in_scores), target_tpr))


# ---------------------------------------------------------------------------
# Score CSV: sample_id,label,split,scorer,score
# The score column holds the detection score -E with 17 significant digits.
# ---------------------------------------------------------------------------

SCORE_CSV_HEADER = ["sample_id", "label", "split", "scorer", "score"]


@dataclass(frozen=True)
class ScoreRow:
    sample_id: str
    label: int | None      # None for out-of-distribution samples
    split: str             # "in" or "out"
    scorer: str
    score: float           # detection score -E

    def __post_init__(self):
        if self.split not in ("in", "out"):
            raise ValueError(f"split must be 'in' or 'out', got {self.split!r}")
        if self.scorer not in SCORER_TAGS:
            raise ConfigError(f"unknown scorer tag {self.scorer!r}")


def save_score_csv(rows: list[ScoreRow], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SCORE_CSV_HEADER)
        for row in rows:
            label = "-" if row.label is None else str(row.label)
            writer.writerow([row.sample_id, label, row.split, row.scorer,
                             format(row.score, ".17g")])


def load_score_csv(path) -> list[ScoreRow]:
    rows = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != SCORE_CSV_HEADER:
            raise ParseError(f"bad score CSV header: {header}", line=1)
        for lineno, rec in enumerate(reader, start=2):
            if len(rec) != len(SCORE_CSV_HEADER):
                raise ParseError(f"expected {len(SCORE_CSV_HEADER)} fields, got {len(rec)}",
                                 line=lineno)
            sample_id, label, split, scorer, score = rec
            try:
                parsed_label = None if label == "-" else int(label)
                parsed_score = float(score)
            except ValueError as exc:
                raise ParseError(str(exc), line=lineno) from None
            try:
                rows.append(ScoreRow(sample_id, parsed_label, split, scorer, parsed_score))
            except ValueError as exc:
                raise ParseError(str(exc), line=lineno) from None
    return rows
