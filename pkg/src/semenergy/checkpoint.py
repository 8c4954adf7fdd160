"""Model persistence: one JSON document holding config, parameters, and means.

Floats are serialized via repr, so a load(save(state)) round trip reproduces
forward outputs bitwise.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .clusters import ClusterMeans
from .errors import ConfigError
from .network import NetworkState

FORMAT_VERSION = 1


@dataclass
class Checkpoint:
    config: dict                        # full training config, snake_case keys
    state: NetworkState
    cluster_means: ClusterMeans | None  # None for modes that never use means


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    doc = {
        "format_version": FORMAT_VERSION,
        "config": ckpt.config,
        "weights": [w.tolist() for w in ckpt.state.weights],
        "biases": [b.tolist() for b in ckpt.state.biases],
        "cluster_means": None if ckpt.cluster_means is None else ckpt.cluster_means.matrix.tolist(),
    }
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps(doc, sort_keys=True, indent=2) + "\n")


def load_checkpoint(path) -> Checkpoint:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise ConfigError(f"unsupported checkpoint format_version {version!r}")
    state = NetworkState(
        [np.asarray(w, dtype=np.float64) for w in doc["weights"]],
        [np.asarray(b, dtype=np.float64) for b in doc["biases"]],
    )
    config = doc.get("config", {})
    means = None
    if doc.get("cluster_means") is not None:
        means = ClusterMeans(np.asarray(doc["cluster_means"], dtype=np.float64),
                             ema_decay=config.get("ema_decay", 0.99))
    return Checkpoint(config=config, state=state, cluster_means=means)
