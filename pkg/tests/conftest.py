import numpy as np
import pytest

from semenergy.clusters import ClusterMeans
from semenergy.network import NetworkConfig, init_network


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_net():
    cfg = NetworkConfig(input_dim=4, hidden_dims=(8, 8), num_classes=3, seed=1)
    return cfg, init_network(cfg)


@pytest.fixture
def means3(rng):
    return ClusterMeans(rng.normal(size=(3, 3)), ema_decay=0.9)


def finite_difference_param_check(loss_fn, state, analytic, rng, n_params=20, h=1e-5,
                                  rel_tol=1e-4):
    """Compare analytic parameter gradients against central differences.

    loss_fn(state) -> float; analytic holds ParameterGradients for the same
    loss. Relative error counts as zero when both sides vanish.
    """
    worst = 0.0
    for _ in range(n_params):
        layer = int(rng.integers(0, len(state.weights)))
        use_weight = bool(rng.integers(0, 2))
        arr = state.weights[layer] if use_weight else state.biases[layer]
        idx = tuple(int(rng.integers(0, s)) for s in arr.shape)

        probe = state.copy()
        target = probe.weights[layer] if use_weight else probe.biases[layer]
        target[idx] += h
        up = loss_fn(probe)
        target[idx] -= 2 * h
        down = loss_fn(probe)
        fd = (up - down) / (2 * h)

        an = (analytic.weights[layer] if use_weight else analytic.biases[layer])[idx]
        denom = max(abs(fd), abs(an))
        rel = 0.0 if denom < 1e-10 else abs(fd - an) / denom
        worst = max(worst, rel)
    assert worst < rel_tol, f"worst relative gradient error {worst:.3e}"
    return worst
