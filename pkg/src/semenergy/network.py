"""Small fully-connected classifier with explicit activation caching.

Hidden layers use ReLU, the logit layer is linear. Forward passes cache all
post-nonlinearity activations so multi-layer energy terms can inject extra
gradient at any hidden layer during the reverse pass.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DimensionError, TrainingError
from .numerics import as_vector


@dataclass(frozen=True)
class NetworkConfig:
    input_dim: int
    hidden_dims: tuple[int, ...]
    num_classes: int
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))
        if self.input_dim < 1:
            raise ConfigError(f"input_dim must be positive, got {self.input_dim}")
        if len(self.hidden_dims) < 2:
            raise ConfigError("at least two hidden layers are required for multi-layer energies")
        if any(h < 1 for h in self.hidden_dims):
            raise ConfigError(f"hidden dims must be positive, got {self.hidden_dims}")
        if self.num_classes < 2:
            raise ConfigError(f"num_classes must be >= 2, got {self.num_classes}")
        if self.seed < 0:
            raise ConfigError(f"seed must be unsigned, got {self.seed}")

    @property
    def layer_dims(self) -> list[tuple[int, int]]:
        sizes = [self.input_dim, *self.hidden_dims, self.num_classes]
        return list(zip(sizes[:-1], sizes[1:]))


@dataclass
class NetworkState:
    """Layer parameters: weights[i] is (fan_in, fan_out), biases[i] is (fan_out,)."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @property
    def num_hidden(self) -> int:
        return len(self.weights) - 1

    def copy(self) -> "NetworkState":
        return NetworkState([w.copy() for w in self.weights], [b.copy() for b in self.biases])


@dataclass
class ForwardTrace:
    """Cached activations of one forward pass.

    Holds the input as well: the reverse pass needs it for the first layer's
    weight gradient.
    """

    x: np.ndarray
    hidden: list[np.ndarray]  # post-ReLU, one per hidden layer
    logits: np.ndarray


@dataclass
class BatchForwardTrace:
    """Row-stacked version of ForwardTrace for a whole mini-batch."""

    x: np.ndarray             # (B, D)
    hidden: list[np.ndarray]  # each (B, h)
    logits: np.ndarray        # (B, K)


@dataclass
class ParameterGradients:
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @classmethod
    def zeros_like(cls, state: NetworkState) -> "ParameterGradients":
        return cls([np.zeros_like(w) for w in state.weights],
                   [np.zeros_like(b) for b in state.biases])

    def add(self, other: "ParameterGradients") -> "ParameterGradients":
        return ParameterGradients(
            [a + b for a, b in zip(self.weights, other.weights)],
            [a + b for a, b in zip(self.biases, other.biases)],
        )

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in self.weights + self.biases)


def init_network(cfg: NetworkConfig) -> NetworkState:
    """Zero-mean Gaussian weights with per-layer scale 1/sqrt(fan_in); zero biases."""
    rng = np.random.default_rng(cfg.seed)
    weights, biases = [], []
    for fan_in, fan_out in cfg.layer_dims:
        weights.append(rng.normal(0.0, 1.0 / np.sqrt(fan_in), size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return NetworkState(weights, biases)


def forward(state: NetworkState, x) -> ForwardTrace:
    x = as_vector(x)
    if x.size != state.weights[0].shape[0]:
        raise DimensionError(
            f"input dimension {x.size} != expected {state.weights[0].shape[0]}")
    hidden = []
    h = x
    for w, b in zip(state.weights[:-1], state.biases[:-1]):
        h = np.maximum(h @ w + b, 0.0)
        hidden.append(h)
    logits = h @ state.weights[-1] + state.biases[-1]
    return ForwardTrace(x=x, hidden=hidden, logits=logits)


def forward_batch(state: NetworkState, x: np.ndarray) -> BatchForwardTrace:
    """Forward pass over a (B, D) matrix of inputs."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != state.weights[0].shape[0]:
        raise DimensionError(
            f"expected (B, {state.weights[0].shape[0]}) inputs, got {x.shape}")
    hidden = []
    h = x
    for w, b in zip(state.weights[:-1], state.biases[:-1]):
        h = np.maximum(h @ w + b, 0.0)
        hidden.append(h)
    logits = h @ state.weights[-1] + state.biases[-1]
    return BatchForwardTrace(x=x, hidden=hidden, logits=logits)


def _check_injection(trace_hidden, d_hidden):
    if d_hidden is None:
        return [None] * len(trace_hidden)
    d_hidden = list(d_hidden)
    if len(d_hidden) == 0:
        return [None] * len(trace_hidden)
    if len(d_hidden) != len(trace_hidden):
        raise DimensionError(
            f"hidden-gradient injection has {len(d_hidden)} entries for "
            f"{len(trace_hidden)} hidden layers")
    for inj, h in zip(d_hidden, trace_hidden):
        if inj is not None and np.shape(inj) != np.shape(h):
            raise DimensionError(
                f"injected gradient shape {np.shape(inj)} != activation shape {np.shape(h)}")
    return d_hidden


def backward(state: NetworkState, trace: ForwardTrace, d_logits,
             d_hidden=None) -> ParameterGradients:
    """Exact reverse-mode gradients of a scalar loss.

    d_logits is dLoss/dlogits; d_hidden optionally supplies extra gradient
    injected at each hidden layer's post-ReLU activation (losses that read
    hidden activations directly need this). Injection is additive.
    """
    d_logits = np.asarray(d_logits, dtype=np.float64)
    if d_logits.shape != trace.logits.shape:
        raise DimensionError(
            f"d_logits shape {d_logits.shape} != logits shape {trace.logits.shape}")
    d_hidden = _check_injection(trace.hidden, d_hidden)

    g_weights = [None] * len(state.weights)
    g_biases = [None] * len(state.biases)

    g = d_logits
    below = trace.hidden[-1]
    g_weights[-1] = np.outer(below, g)
    g_biases[-1] = g.copy()
    g = state.weights[-1] @ g

    for layer in range(len(trace.hidden) - 1, -1, -1):
        h = trace.hidden[layer]
        if d_hidden[layer] is not None:
            g = g + np.asarray(d_hidden[layer], dtype=np.float64)
        g = g * (h > 0.0)
        below = trace.hidden[layer - 1] if layer > 0 else trace.x
        g_weights[layer] = np.outer(below, g)
        g_biases[layer] = g.copy()
        if layer > 0:
            g = state.weights[layer] @ g
    return ParameterGradients(g_weights, g_biases)


def backward_batch(state: NetworkState, trace: BatchForwardTrace, d_logits: np.ndarray,
                   d_hidden=None) -> ParameterGradients:
    """Reverse pass for a whole batch; returns gradients summed over rows.

    Per-row scaling (e.g. 1/B for mean reductions) belongs in d_logits /
    d_hidden, so the summed result is the gradient of the batch loss.
    """
    d_logits = np.asarray(d_logits, dtype=np.float64)
    if d_logits.shape != trace.logits.shape:
        raise DimensionError(
            f"d_logits shape {d_logits.shape} != logits shape {trace.logits.shape}")
    d_hidden = _check_injection(trace.hidden, d_hidden)

    g_weights = [None] * len(state.weights)
    g_biases = [None] * len(state.biases)

    g = d_logits
    below = trace.hidden[-1]
    g_weights[-1] = below.T @ g
    g_biases[-1] = g.sum(axis=0)
    g = g @ state.weights[-1].T

    for layer in range(len(trace.hidden) - 1, -1, -1):
        h = trace.hidden[layer]
        if d_hidden[layer] is not None:
            g = g + np.asarray(d_hidden[layer], dtype=np.float64)
        g = g * (h > 0.0)
        below = trace.hidden[layer - 1] if layer > 0 else trace.x
        g_weights[layer] = below.T @ g
        g_biases[layer] = g.sum(axis=0)
        if layer > 0:
            g = g @ state.weights[layer].T
    return ParameterGradients(g_weights, g_biases)


def sgd_step(state: NetworkState, grads: ParameterGradients, lr: float) -> NetworkState:
    """theta <- theta - lr * g, elementwise; aborts on non-finite gradients."""
    if lr < 0.0 or not np.isfinite(lr):
        raise ConfigError(f"learning rate must be a nonnegative finite real, got {lr}")
    if len(grads.weights) != len(state.weights):
        raise DimensionError("gradient/state layer count mismatch")
    if not grads.is_finite():
        raise TrainingError("non-finite gradients encountered; aborting the update")
    new_w = [w - lr * g for w, g in zip(state.weights, grads.weights)]
    new_b = [b - lr * g for b, g in zip(state.biases, grads.biases)]
    return NetworkState(new_w, new_b)
