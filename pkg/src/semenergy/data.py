"""Synthetic in/out-distribution datasets plus logit-file ingestion.

In-distribution classes are isotropic Gaussians around centers auto-placed
on a sphere, so the classification problem itself is easy and failures
isolate the detection machinery. Out-of-distribution samples come in three
kinds: a ring strictly outside all class clusters, a shifted/rotated copy of
the class mixture, and a uniform box over twice the in-support. Train and
test OOD default to different kinds (uniform vs ring) to mimic training on
auxiliary outliers while testing on unseen ones.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, FormatError, ParseError

OOD_KINDS = ("ring", "shifted", "uniform")


@dataclass(frozen=True)
class SyntheticSpec:
    num_classes: int = 4
    input_dim: int = 2
    r_c: float = 4.0                 # radius of the sphere holding class centers
    in_std: float = 0.5
    ood_train_kind: str = "uniform"
    ood_test_kind: str = "ring"
    n_train_in: int = 4000
    n_train_out: int = 8000
    n_test_in: int = 1000
    n_test_out: int = 1000
    seed: int = 0
    ring_outer: float | None = None  # default: inner radius + r_c

    def __post_init__(self):
        if self.num_classes < 2:
            raise ConfigError(f"num_classes must be >= 2, got {self.num_classes}")
        if self.input_dim < 2:
            raise ConfigError(f"input_dim must be >= 2, got {self.input_dim}")
        if self.in_std <= 0.0 or self.r_c <= 0.0:
            raise ConfigError("r_c and in_std must be positive")
        for kind in (self.ood_train_kind, self.ood_test_kind):
            if kind not in OOD_KINDS:
                raise ConfigError(f"unknown OOD kind {kind!r}; choose from {OOD_KINDS}")
        for name in ("n_train_in", "n_train_out", "n_test_in", "n_test_out"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        inner = self.ring_inner
        if self.ring_outer is not None and self.ring_outer <= inner:
            raise ConfigError(
                f"ring outer radius {self.ring_outer} must exceed inner radius {inner}")

    @property
    def ring_inner(self) -> float:
        return self.r_c + 4.0 * self.in_std


@dataclass(frozen=True)
class Sample:
    sample_id: str
    features: np.ndarray
    label: int | None      # None marks out-of-distribution
    split: str             # "train" or "test"
    dist: str              # "in" or "out"


@dataclass
class Dataset:
    samples: list[Sample]
    num_classes: int
    input_dim: int

    def select(self, split: str | None = None, dist: str | None = None) -> list[Sample]:
        return [s for s in self.samples
                if (split is None or s.split == split) and (dist is None or s.dist == dist)]

    def features_labels(self, split: str, dist: str) -> tuple[np.ndarray, np.ndarray]:
        chosen = self.select(split, dist)
        feats = np.array([s.features for s in chosen])
        labels = np.array([-1 if s.label is None else s.label for s in chosen])
        return feats, labels


def place_class_centers(num_classes: int, input_dim: int, r_c: float,
                        rng: np.random.Generator) -> np.ndarray:
    """K well-spread points on the sphere of radius r_c.

    Regular simplex when K <= D+1 (pairwise cosine -1/(K-1)); a signed
    orthonormal frame from a seeded QR otherwise; random unit directions as
    the fallback for K > 2D.
    """
    k, d = num_classes, input_dim
    if k <= d + 1:
        eye = np.eye(k)
        centered = eye - eye.mean(axis=0)
        _, _, vt = np.linalg.svd(centered)
        coords = centered @ vt[: k - 1].T
        coords /= np.linalg.norm(coords, axis=1, keepdims=True)
        centers = np.zeros((k, d))
        centers[:, : k - 1] = coords
    elif k <= 2 * d:
        q, _ = np.linalg.qr(rng.normal(size=(d, d)))
        frame = np.concatenate([q.T, -q.T])
        centers = frame[:k]
    else:
        centers = rng.normal(size=(k, d))
        centers /= np.linalg.norm(centers, axis=1, keepdims=True)
    return r_c * centers


def _sample_ood(spec: SyntheticSpec, kind: str, n: int, centers: np.ndarray,
                rng: np.random.Generator) -> np.ndarray:
    d = spec.input_dim
    if kind == "uniform":
        # Box covering twice the in-distribution support. Points inside any
        # class's 3-sigma ball are rejected: auxiliary outliers must not
        # overlap the in-distribution, mirroring how outlier training sets
        # are scrubbed of in-class content.
        half = 2.0 * (spec.r_c + 3.0 * spec.in_std)
        exclusion = 3.0 * spec.in_std
        out = np.empty((n, d))
        filled = 0
        while filled < n:
            cand = rng.uniform(-half, half, size=(n - filled, d))
            dist = np.min(np.linalg.norm(cand[:, None, :] - centers[None], axis=2), axis=1)
            keep = cand[dist > exclusion]
            out[filled:filled + keep.shape[0]] = keep
            filled += keep.shape[0]
        return out
    if kind == "ring":
        inner = spec.ring_inner
        outer = spec.ring_outer if spec.ring_outer is not None else inner + spec.r_c
        dirs = rng.normal(size=(n, d))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        u = rng.uniform(size=(n, 1))
        radii = (u * (outer**d - inner**d) + inner**d) ** (1.0 / d)
        return dirs * radii
    # shifted: the class mixture rotated in the first coordinate plane and
    # pushed slightly outward
    angle = np.pi / spec.num_classes
    rot = np.eye(d)
    rot[0, 0] = rot[1, 1] = np.cos(angle)
    rot[0, 1], rot[1, 0] = -np.sin(angle), np.sin(angle)
    shifted_centers = 1.25 * centers @ rot.T
    picks = np.arange(n) % spec.num_classes
    return shifted_centers[picks] + rng.normal(0.0, spec.in_std, size=(n, d))


def _balanced_counts(total: int, num_classes: int) -> list[int]:
    base, extra = divmod(total, num_classes)
    return [base + (1 if c < extra else 0) for c in range(num_classes)]


def generate(spec: SyntheticSpec) -> Dataset:
    """Deterministic synthetic dataset with exact per-split/per-dist counts."""
    rng = np.random.default_rng(spec.seed)
    centers = place_class_centers(spec.num_classes, spec.input_dim, spec.r_c, rng)

    samples: list[Sample] = []
    next_id = 0

    def add(features: np.ndarray, label: int | None, split: str, dist: str):
        nonlocal next_id
        samples.append(Sample(str(next_id), features, label, split, dist))
        next_id += 1

    for split, n_in, n_out, ood_kind in (
        ("train", spec.n_train_in, spec.n_train_out, spec.ood_train_kind),
        ("test", spec.n_test_in, spec.n_test_out, spec.ood_test_kind),
    ):
        for cls, count in enumerate(_balanced_counts(n_in, spec.num_classes)):
            points = centers[cls] + rng.normal(0.0, spec.in_std, size=(count, spec.input_dim))
            for row in points:
                add(row, cls, split, "in")
        for row in _sample_ood(spec, ood_kind, n_out, centers, rng):
            add(row, None, split, "out")

    return Dataset(samples, spec.num_classes, spec.input_dim)


# ---------------------------------------------------------------------------
# Dataset CSV: id,split,dist,label,x0,...,x{D-1}
# Logit CSV:   id,dist,label,z0,...,z{K-1}
# label is "-" for out-of-distribution rows.
# ---------------------------------------------------------------------------


def save_dataset_csv(dataset: Dataset, path) -> None:
    dim = dataset.input_dim
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["id", "split", "dist", "label"] + [f"x{i}" for i in range(dim)])
        for s in dataset.samples:
            label = "-" if s.label is None else str(s.label)
            writer.writerow([s.sample_id, s.split, s.dist, label]
                            + [repr(float(v)) for v in s.features])


def load_dataset_csv(path) -> Dataset:
    samples: list[Sample] = []
    max_label = -1
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[:4] != ["id", "split", "dist", "label"]:
            raise ParseError(f"bad dataset CSV header: {header}", line=1)
        dim = len(header) - 4
        if dim < 1:
            raise FormatError("dataset CSV has no feature columns", line=1)
        for lineno, rec in enumerate(reader, start=2):
            if len(rec) != len(header):
                raise FormatError(
                    f"expected {len(header)} fields, got {len(rec)}", line=lineno)
            sid, split, dist, label = rec[:4]
            if split not in ("train", "test") or dist not in ("in", "out"):
                raise ParseError(f"bad split/dist pair ({split!r}, {dist!r})", line=lineno)
            try:
                parsed_label = None if label == "-" else int(label)
                features = np.array([float(v) for v in rec[4:]])
            except ValueError as exc:
                raise ParseError(str(exc), line=lineno) from None
            if dist == "in" and parsed_label is None:
                raise ParseError("in-distribution row without a class label", line=lineno)
            if parsed_label is not None:
                max_label = max(max_label, parsed_label)
            samples.append(Sample(sid, features, parsed_label, split, dist))
    return Dataset(samples, num_classes=max_label + 1, input_dim=dim)


def save_logit_csv(rows: list[tuple[str, np.ndarray, int | None, str]], path) -> None:
    """Write (sample_id, logits, label-or-None, dist) rows."""
    if not rows:
        raise ValueError("cannot infer logit dimension from an empty row list")
    dim = len(rows[0][1])
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["id", "dist", "label"] + [f"z{i}" for i in range(dim)])
        for sid, logits, label, dist in rows:
            if len(logits) != dim:
                raise FormatError(f"row {sid} has {len(logits)} logits, expected {dim}")
            writer.writerow([sid, dist, "-" if label is None else str(label)]
                            + [repr(float(v)) for v in logits])


def load_logit_csv(path) -> list[tuple[str, np.ndarray, int | None, str]]:
    """Parse externally produced logits; dimension is fixed by the header."""
    rows: list[tuple[str, np.ndarray, int | None, str]] = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[:3] != ["id", "dist", "label"]:
            raise ParseError(f"bad logit CSV header: {header}", line=1)
        dim = len(header) - 3
        if dim < 1:
            raise FormatError("logit CSV has no logit columns", line=1)
        for lineno, rec in enumerate(reader, start=2):
            if len(rec) != len(header):
                raise FormatError(
                    f"expected {dim} logit columns, got {len(rec) - 3}", line=lineno)
            sid, dist, label = rec[:3]
            if dist not in ("in", "out"):
                raise ParseError(f"dist must be 'in' or 'out', got {dist!r}", line=lineno)
            try:
                parsed_label = None if label == "-" else int(label)
                logits = np.array([float(v) for v in rec[3:]])
            except ValueError as exc:
                raise ParseError(str(exc), line=lineno) from None
            rows.append((sid, logits, parsed_label, dist))
    return rows
