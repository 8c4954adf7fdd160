"""Training configuration and the two-phase training loop.

Phase 1 warms the classifier up with plain cross-entropy on labelled
in-distribution data, after which the class means are initialized from the
full in-distribution training set. Phase 2 runs one combined optimization
step per iteration on a paired in/out mini-batch: cross-entropy plus the
weighted energy hinge on the mode's score plus the mode's cluster loss, then
an EMA update of the means from the in-batch logits.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from .clusters import ClusterMeans, ema_update, init_means
from .errors import ConfigError
from .losses import (
    FocalConfig,
    MarginConfig,
    cluster_focal_loss_batch,
    cross_entropy_batch,
    ii_loss,
    semantic_energy_hinge_loss,
)
from .network import (
    BatchForwardTrace,
    NetworkConfig,
    NetworkState,
    backward_batch,
    forward_batch,
    init_network,
    sgd_step,
)
from .scoring import (
    LayerEnergyConfig,
    free_energy_batch,
    free_energy_grad_batch,
    semantic_energy_batch,
    semantic_energy_grad_batch,
)

MODES = ("se", "mlse", "cfl_mlse", "energy_baseline", "softmax_baseline")
CLUSTER_LOSSES = ("cfl", "ii")
WARMUP_OBJECTIVES = ("ce", "ce_ii")


@dataclass
class TrainConfig:
    network: NetworkConfig
    margins: MarginConfig = field(default_factory=MarginConfig)
    focal: FocalConfig = field(default_factory=FocalConfig)
    lambda_: float = 0.1
    temperature: float = 1.0
    layer_energy: LayerEnergyConfig | None = None  # None -> last two hidden layers
    cluster_loss: str = "ii"
    mode: str = "cfl_mlse"
    warmup_epochs: int = 1
    epochs: int = 30
    lr: float = 0.02
    batch_in: int = 128
    batch_out: int = 256
    ema_decay: float = 0.99
    cfl_scale: float = 10.0
    cluster_weight: float = 1.0
    warmup_objective: str = "ce"
    seed: int = 0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}; choose from {MODES}")
        if self.cluster_loss not in CLUSTER_LOSSES:
            raise ConfigError(f"unknown cluster loss {self.cluster_loss!r}")
        if self.warmup_objective not in WARMUP_OBJECTIVES:
            raise ConfigError(f"unknown warmup objective {self.warmup_objective!r}")
        if self.mode == "cfl_mlse":
            self.cluster_loss = "cfl"
        if self.layer_energy is None:
            self.layer_energy = LayerEnergyConfig.last_two_hidden(len(self.network.hidden_dims))
        for idx in self.layer_energy.layer_indices:
            if not 0 <= idx < len(self.network.hidden_dims):
                raise ConfigError(f"energy layer index {idx} invalid for this network")
        if self.lambda_ < 0.0:
            raise ConfigError(f"lambda must be nonnegative, got {self.lambda_}")
        if self.warmup_epochs < 1:
            raise ConfigError("warmup_epochs must be >= 1")
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        if self.batch_in < 1 or self.batch_out < 1:
            raise ConfigError("batch sizes must be positive")
        if self.lr <= 0.0:
            raise ConfigError("lr must be positive")
        if not 0.0 < self.ema_decay < 1.0:
            raise ConfigError("ema_decay must lie in (0, 1)")
        if self.cfl_scale <= 0.0:
            raise ConfigError("cfl_scale must be positive")
        if self.cluster_weight < 0.0:
            raise ConfigError("cluster_weight must be nonnegative")
        if self.margins.m_in >= self.margins.m_out:
            warnings.warn(
                f"m_in ({self.margins.m_in}) >= m_out ({self.margins.m_out}); "
                "the hinge cannot be satisfied on both sides simultaneously")

    @property
    def uses_means(self) -> bool:
        return self.mode in ("se", "mlse", "cfl_mlse")

    @property
    def uses_hinge(self) -> bool:
        return self.mode != "softmax_baseline"

    @property
    def uses_layer_energy(self) -> bool:
        return self.mode in ("mlse", "cfl_mlse")

    @property
    def default_scorer(self) -> str:
        return {
            "se": "semantic",
            "mlse": "multilayer_semantic",
            "cfl_mlse": "multilayer_semantic",
            "energy_baseline": "vanilla",
            "softmax_baseline": "softmax_baseline",
        }[self.mode]

    def to_dict(self) -> dict:
        return {
            "network": {
                "input_dim": self.network.input_dim,
                "hidden_dims": list(self.network.hidden_dims),
                "num_classes": self.network.num_classes,
                "seed": self.network.seed,
            },
            "margins": {"m_in": self.margins.m_in, "m_out": self.margins.m_out},
            "focal": {
                "gamma": self.focal.gamma,
                "alpha": list(self.focal.alpha) if np.ndim(self.focal.alpha) else self.focal.alpha,
            },
            "lambda": self.lambda_,
            "temperature": self.temperature,
            "layer_energy": {
                "layer_indices": list(self.layer_energy.layer_indices),
                "layer_weights": list(self.layer_energy.layer_weights),
            },
            "cluster_loss": self.cluster_loss,
            "mode": self.mode,
            "warmup_epochs": self.warmup_epochs,
            "epochs": self.epochs,
            "lr": self.lr,
            "batch_in": self.batch_in,
            "batch_out": self.batch_out,
            "ema_decay": self.ema_decay,
            "cfl_scale": self.cfl_scale,
            "cluster_weight": self.cluster_weight,
            "warmup_objective": self.warmup_objective,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "TrainConfig":
        doc = dict(doc)
        net = doc.pop("network")
        network = NetworkConfig(
            input_dim=net["input_dim"],
            hidden_dims=tuple(net["hidden_dims"]),
            num_classes=net["num_classes"],
            seed=net.get("seed", 0),
        )
        kwargs = {"network": network}
        if "margins" in doc:
            kwargs["margins"] = MarginConfig(**doc.pop("margins"))
        if "focal" in doc:
            focal = doc.pop("focal")
            alpha = focal.get("alpha", 1.0)
            kwargs["focal"] = FocalConfig(
                gamma=focal.get("gamma", 2.0),
                alpha=tuple(alpha) if isinstance(alpha, (list, tuple)) else alpha,
            )
        if "layer_energy" in doc:
            le = doc.pop("layer_energy")
            kwargs["layer_energy"] = LayerEnergyConfig(
                tuple(le["layer_indices"]), tuple(le["layer_weights"]))
        if "lambda" in doc:
            kwargs["lambda_"] = doc.pop("lambda")
        for name in ("temperature", "cluster_loss", "mode", "warmup_epochs", "epochs",
                     "lr", "batch_in", "batch_out", "ema_decay", "cfl_scale",
                     "cluster_weight", "warmup_objective", "seed"):
            if name in doc:
                kwargs[name] = doc.pop(name)
        if doc:
            raise ConfigError(f"unknown config keys: {sorted(doc)}")
        return cls(**kwargs)


@dataclass
class TrainResult:
    state: NetworkState
    means: ClusterMeans | None
    config: TrainConfig
    log: list[dict]


def predict_logits(state: NetworkState, features: np.ndarray) -> np.ndarray:
    return forward_batch(state, features).logits


def accuracy(state: NetworkState, features: np.ndarray, labels: np.ndarray) -> float:
    """Classification accuracy via argmax over raw logits."""
    preds = np.argmax(predict_logits(state, features), axis=1)
    return float(np.mean(preds == np.asarray(labels)))


def _batch_indices(n: int, batch: int, rng: np.random.Generator):
    order = rng.permutation(n)
    for start in range(0, n, batch):
        yield order[start:start + batch]


class _OutSampler:
    """Cycles shuffled out-distribution indices, reshuffling on exhaustion."""

    def __init__(self, n: int, rng: np.random.Generator):
        self.n = n
        self.rng = rng
        self.order = rng.permutation(n) if n else np.array([], dtype=np.intp)
        self.pos = 0

    def take(self, count: int) -> np.ndarray:
        picked = []
        while count > 0:
            if self.pos == self.n:
                self.order = self.rng.permutation(self.n)
                self.pos = 0
            grab = min(count, self.n - self.pos)
            picked.append(self.order[self.pos:self.pos + grab])
            self.pos += grab
            count -= grab
        return np.concatenate(picked)


def _warmup_ii_terms(logits: np.ndarray, labels: np.ndarray):
    """Batch-local inter-intra terms for the ii-style warmup objective.

    Class means come from the batch itself here (the persistent means do not
    exist yet during warmup); classes absent from the batch are skipped.
    """
    classes = np.unique(labels)
    means = {int(c): logits[labels == c].mean(axis=0) for c in classes}
    diffs = logits - np.array([means[int(c)] for c in labels])
    value = float(np.mean(np.sum(diffs * diffs, axis=1)))
    if classes.size >= 2:
        rows = np.array([means[int(c)] for c in classes])
        pair_sq = np.sum((rows[:, None, :] - rows[None, :, :]) ** 2, axis=2)
        value -= float(np.min(pair_sq[~np.eye(classes.size, dtype=bool)]))
    grads = 2.0 * diffs / logits.shape[0]
    return value, grads


def _mode_scores(config: TrainConfig, trace: BatchForwardTrace,
                 means: ClusterMeans | None):
    """Scores of the mode's energy plus gradients w.r.t. logits and hidden layers."""
    t = config.temperature
    if config.mode == "energy_baseline":
        scores = free_energy_batch(trace.logits, t)
        d_logits = free_energy_grad_batch(trace.logits, t)
        return scores, d_logits, {}
    scores = semantic_energy_batch(trace.logits, means, t)
    d_logits = semantic_energy_grad_batch(trace.logits, means, t)
    d_hidden = {}
    if config.uses_layer_energy:
        for idx, weight in zip(config.layer_energy.layer_indices,
                               config.layer_energy.layer_weights):
            scores = scores + weight * free_energy_batch(trace.hidden[idx], t)
            d_hidden[idx] = weight * free_energy_grad_batch(trace.hidden[idx], t)
    return scores, d_logits, d_hidden


def _cluster_terms(config: TrainConfig, logits: np.ndarray, labels: np.ndarray,
                   means: ClusterMeans):
    """Mean cluster-loss value over the batch and per-sample logit gradients."""
    if config.cluster_loss == "cfl":
        values, grads = cluster_focal_loss_batch(
            logits, labels, means, config.focal, config.cfl_scale)
        return float(np.mean(values)), grads / logits.shape[0]
    loss = ii_loss(logits, labels, means)
    return loss.value, loss.grad_logits  # ii gradients already carry the 1/B


def train(config: TrainConfig, dataset, log_fn=None) -> TrainResult:
    """Run the full two-phase schedule and return the final model.

    log_fn, when given, receives one dict per epoch with the loss
    components; the CLI prints them as JSON lines.
    """
    x_in, y_in = dataset.features_labels("train", "in")
    x_out, _ = dataset.features_labels("train", "out")
    if x_in.shape[0] == 0:
        raise ConfigError("training requires labelled in-distribution data")
    if config.uses_hinge and x_out.shape[0] == 0:
        raise ConfigError(f"mode {config.mode!r} requires out-of-distribution training data")
    if dataset.num_classes != config.network.num_classes:
        raise ConfigError(
            f"dataset has {dataset.num_classes} classes but the network expects "
            f"{config.network.num_classes}")

    rng = np.random.default_rng(config.seed)
    state = init_network(config.network)
    t = config.temperature
    log: list[dict] = []
    epoch_no = 0

    def emit(entry: dict):
        log.append(entry)
        if log_fn is not None:
            log_fn(entry)

    # Phase 1: cross-entropy warmup on in-distribution data.
    for _ in range(config.warmup_epochs):
        epoch_no += 1
        ce_sum, steps = 0.0, 0
        for idx in _batch_indices(x_in.shape[0], config.batch_in, rng):
            xb, yb = x_in[idx], y_in[idx]
            trace = forward_batch(state, xb)
            ce_vals, ce_grads = cross_entropy_batch(trace.logits, yb, t)
            d_logits = ce_grads / xb.shape[0]
            if config.warmup_objective == "ce_ii":
                _, ii_grads = _warmup_ii_terms(trace.logits, yb)
                d_logits = d_logits + config.cluster_weight * ii_grads
            grads = backward_batch(state, trace, d_logits)
            state = sgd_step(state, grads, config.lr)
            ce_sum += float(np.mean(ce_vals))
            steps += 1
        emit({"epoch": epoch_no, "ce": ce_sum / steps, "hinge": 0.0, "cluster": 0.0,
              "total": ce_sum / steps, "train_acc": accuracy(state, x_in, y_in)})

    # Class means from the warmed-up model over the full in-train set.
    means = init_means(predict_logits(state, x_in), y_in, ema_decay=config.ema_decay)
    out_sampler = _OutSampler(x_out.shape[0], rng)

    # Phase 2: joint objective with per-batch EMA updates of the means.
    for _ in range(config.epochs):
        epoch_no += 1
        sums = {"ce": 0.0, "hinge": 0.0, "cluster": 0.0, "total": 0.0}
        steps = 0
        for idx in _batch_indices(x_in.shape[0], config.batch_in, rng):
            xb, yb = x_in[idx], y_in[idx]
            trace_in = forward_batch(state, xb)
            n_in = xb.shape[0]

            ce_vals, ce_grads = cross_entropy_batch(trace_in.logits, yb, t)
            ce_value = float(np.mean(ce_vals))
            d_logits_in = ce_grads / n_in
            d_hidden_in = [None] * len(trace_in.hidden)
            hinge_value = 0.0
            cluster_value = 0.0
            trace_out = None
            d_logits_out = None
            d_hidden_out = [None] * len(trace_in.hidden)

            if config.uses_hinge:
                xo = x_out[out_sampler.take(config.batch_out)]
                trace_out = forward_batch(state, xo)
                s_in, ds_in_dlogits, ds_in_dhidden = _mode_scores(config, trace_in, means)
                s_out, ds_out_dlogits, ds_out_dhidden = _mode_scores(config, trace_out, means)
                hinge = semantic_energy_hinge_loss(s_in, s_out, config.margins)
                hinge_value = hinge.value
                lam = config.lambda_
                d_logits_in = d_logits_in + lam * hinge.grad_score_in[:, None] * ds_in_dlogits
                d_logits_out = lam * hinge.grad_score_out[:, None] * ds_out_dlogits
                for layer, grad in ds_in_dhidden.items():
                    d_hidden_in[layer] = lam * hinge.grad_score_in[:, None] * grad
                for layer, grad in ds_out_dhidden.items():
                    d_hidden_out[layer] = lam * hinge.grad_score_out[:, None] * grad

            if config.uses_means and config.cluster_weight > 0.0:
                cluster_value, cluster_grads = _cluster_terms(config, trace_in.logits, yb, means)
                d_logits_in = d_logits_in + config.cluster_weight * cluster_grads

            grads = backward_batch(state, trace_in, d_logits_in, d_hidden_in)
            if trace_out is not None:
                grads = grads.add(backward_batch(state, trace_out, d_logits_out, d_hidden_out))
            state = sgd_step(state, grads, config.lr)
            means = ema_update(means, trace_in.logits, yb)

            sums["ce"] += ce_value
            sums["hinge"] += hinge_value
            sums["cluster"] += cluster_value
            sums["total"] += (ce_value + config.lambda_ * hinge_value
                              + config.cluster_weight * cluster_value)
            steps += 1

        emit({"epoch": epoch_no,
              **{k: sums[k] / steps for k in ("ce", "hinge", "cluster", "total")},
              "train_acc": accuracy(state, x_in, y_in)})

    return TrainResult(state=state, means=means, config=config, log=log)


def default_config_for(dataset, seed: int = 0, **overrides) -> TrainConfig:
    """A reasonable TrainConfig for a dataset when none is supplied."""
    network = NetworkConfig(
        input_dim=dataset.input_dim,
        hidden_dims=(32, 32),
        num_classes=dataset.num_classes,
        seed=seed,
    )
    return TrainConfig(network=network, seed=seed, **overrides)


def log_line(entry: dict) -> str:
    return json.dumps(entry, sort_keys=True)
