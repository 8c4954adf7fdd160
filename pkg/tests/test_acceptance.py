"""Acceptance suite: every criterion prints one [PASS]/[FAIL] line.

Run with `pytest tests/test_acceptance.py -v -s` to see the lines as they
complete.
"""

import json
import math
import time

import numpy as np
import pytest

from conftest import finite_difference_param_check
from semenergy.checkpoint import load_checkpoint, save_checkpoint
from semenergy.cli import main
from semenergy.clusters import ClusterMeans, ema_update
from semenergy.data import SyntheticSpec, generate
from semenergy.losses import (
    FocalConfig,
    MarginConfig,
    cluster_focal_loss,
    cross_entropy,
    focal_term,
    ii_loss,
    semantic_energy_hinge_loss,
)
from semenergy.metrics import ScoredSample, aupr, auroc, overlap_coefficient, threshold_at_tpr
from semenergy.network import (
    NetworkConfig,
    ParameterGradients,
    backward,
    forward,
    forward_batch,
    init_network,
)
from semenergy.numerics import cosine_similarity_rows
from semenergy.scoring import (
    LayerEnergyConfig,
    free_energy,
    free_energy_batch,
    free_energy_grad,
    multilayer_semantic_energy,
    semantic_energy,
    semantic_energy_batch,
    semantic_energy_grad,
    softmax_score_batch,
)
from semenergy.train import default_config_for, train
from test_metrics import aupr_brute_force, auroc_brute_force, make_samples


def _report(criterion: str, ok: bool) -> bool:
    print(f"[{'PASS' if ok else 'FAIL'}] {criterion}")
    return ok


# -------------------------------------------------------------------------
# 1. Gradient correctness for every loss, composed through a small network.
# -------------------------------------------------------------------------

class TestCriterion1GradientCorrectness:
    def test_all_losses(self):
        start = time.monotonic()
        rng = np.random.default_rng(42)
        cfg = NetworkConfig(input_dim=4, hidden_dims=(8, 8), num_classes=3, seed=1)
        state = init_network(cfg)
        means = ClusterMeans(rng.normal(size=(3, 3)), ema_decay=0.9)
        margins = MarginConfig(m_in=-3.0, m_out=-1.0)
        layer_cfg = LayerEnergyConfig((0, 1), (1.0, 0.5))
        xs_in = rng.normal(size=(4, 4))
        ys = rng.integers(0, 3, size=4)
        xs_out = rng.normal(size=(5, 4))

        def ce_loss(st):
            return float(np.mean([cross_entropy(forward(st, x).logits, int(y)).value
                                  for x, y in zip(xs_in, ys)]))

        def ce_grads(st):
            total = ParameterGradients.zeros_like(st)
            for x, y in zip(xs_in, ys):
                tr = forward(st, x)
                lv = cross_entropy(tr.logits, int(y))
                total = total.add(backward(st, tr, lv.grad_logits / len(xs_in)))
            return total

        def cfl_loss(gamma):
            fc = FocalConfig(gamma=gamma, alpha=1.0)

            def loss(st):
                return float(np.mean([
                    cluster_focal_loss(forward(st, x).logits, int(y), means, fc, 10.0).value
                    for x, y in zip(xs_in, ys)]))

            def grads(st):
                total = ParameterGradients.zeros_like(st)
                for x, y in zip(xs_in, ys):
                    tr = forward(st, x)
                    lv = cluster_focal_loss(tr.logits, int(y), means, fc, 10.0)
                    total = total.add(backward(st, tr, lv.grad_logits / len(xs_in)))
                return total

            return loss, grads

        def ii_value(st):
            logits = np.array([forward(st, x).logits for x in xs_in])
            return ii_loss(logits, ys, means).value

        def ii_grads(st):
            traces = [forward(st, x) for x in xs_in]
            lv = ii_loss(np.array([t.logits for t in traces]), ys, means)
            total = ParameterGradients.zeros_like(st)
            for tr, gl in zip(traces, lv.grad_logits):
                total = total.add(backward(st, tr, gl))
            return total

        def hinge_loss(multilayer):
            def scores(st, xs):
                if multilayer:
                    return [multilayer_semantic_energy(forward(st, x), means, layer_cfg).value
                            for x in xs]
                return [semantic_energy(forward(st, x).logits, means).value for x in xs]

            def loss(st):
                return semantic_energy_hinge_loss(scores(st, xs_in), scores(st, xs_out),
                                                  margins).value

            def grads(st):
                tr_in = [forward(st, x) for x in xs_in]
                tr_out = [forward(st, x) for x in xs_out]
                if multilayer:
                    s_in = [multilayer_semantic_energy(t, means, layer_cfg).value for t in tr_in]
                    s_out = [multilayer_semantic_energy(t, means, layer_cfg).value for t in tr_out]
                else:
                    s_in = [semantic_energy(t.logits, means).value for t in tr_in]
                    s_out = [semantic_energy(t.logits, means).value for t in tr_out]
                hinge = semantic_energy_hinge_loss(s_in, s_out, margins)
                total = ParameterGradients.zeros_like(st)
                for traces, score_grads in ((tr_in, hinge.grad_score_in),
                                            (tr_out, hinge.grad_score_out)):
                    for tr, g in zip(traces, score_grads):
                        d_logits = g * semantic_energy_grad(tr.logits, means)
                        d_hidden = [None, None]
                        if multilayer:
                            for idx, w in zip(layer_cfg.layer_indices, layer_cfg.layer_weights):
                                d_hidden[idx] = g * w * free_energy_grad(tr.hidden[idx])
                        total = total.add(backward(st, tr, d_logits, d_hidden))
                return total

            return loss, grads

        checks = [("cross_entropy", ce_loss, ce_grads)]
        for gamma in (0.0, 1.0, 2.0):
            loss, grads = cfl_loss(gamma)
            checks.append((f"cluster_focal_loss(gamma={gamma})", loss, grads))
        checks.append(("ii_loss", ii_value, ii_grads))
        loss, grads = hinge_loss(multilayer=False)
        checks.append(("hinge through semantic_energy", loss, grads))
        loss, grads = hinge_loss(multilayer=True)
        checks.append(("hinge through multilayer_semantic_energy", loss, grads))

        ok = True
        for name, loss_fn, grad_fn in checks:
            check_rng = np.random.default_rng(7)
            try:
                finite_difference_param_check(loss_fn, state, grad_fn(state), check_rng,
                                              n_params=20, h=1e-5, rel_tol=1e-4)
            except AssertionError:
                ok = False
        elapsed = time.monotonic() - start
        ok = ok and elapsed < 30.0
        assert _report(f"criterion 1: gradient correctness ({elapsed:.1f}s)", ok)


# -------------------------------------------------------------------------
# 2. Reduction identities.
# -------------------------------------------------------------------------

class TestCriterion2ReductionIdentities:
    def test_identities(self):
        rng = np.random.default_rng(11)
        ok = True

        means = ClusterMeans(rng.normal(size=(4, 4)))
        cfg = FocalConfig(gamma=0.0, alpha=1.0)
        for _ in range(1000):
            logits = rng.normal(size=4) * 3
            label = int(rng.integers(0, 4))
            cfl = cluster_focal_loss(logits, label, means, cfg, 10.0).value
            sims = cosine_similarity_rows(logits[None, :], means.matrix)[0]
            ce = cross_entropy(10.0 * sims, label).value
            if abs(cfl - ce) > 1e-12:
                ok = False
                break

        for _ in range(200):
            logits = rng.normal(size=5) * 4
            self_means = ClusterMeans(np.tile(logits, (5, 1)))
            if abs(semantic_energy(logits, self_means).value
                   - free_energy(logits).value) > 1e-10:
                ok = False
                break

        ok = ok and abs(focal_term(0.9, gamma=2.0, alpha=1.0) - 0.00105361) <= 1e-8
        assert _report("criterion 2: reduction identities", ok)


# -------------------------------------------------------------------------
# 3. Metric-oracle equivalence.
# -------------------------------------------------------------------------

class TestCriterion3MetricOracles:
    def test_oracles(self):
        start = time.monotonic()
        rng = np.random.default_rng(99)
        ok = True
        for trial in range(100):
            n_in = int(rng.integers(2, 251))
            n_out = int(rng.integers(2, 251))
            if trial % 2 == 0:
                # engineered ties from a coarse integer grid
                ins = rng.integers(0, 12, size=n_in).astype(float)
                outs = rng.integers(0, 12, size=n_out).astype(float)
            else:
                ins = rng.normal(loc=0.5, size=n_in)
                outs = rng.normal(size=n_out)
            samples = make_samples(ins, outs)
            if auroc(samples) != auroc_brute_force(samples):
                ok = False
            if abs(aupr(samples) - aupr_brute_force(samples)) > 1e-12:
                ok = False

        for _ in range(30):
            n = int(rng.integers(2, 501))
            det = rng.normal(size=n)
            while len(set(det)) != n:
                det = rng.normal(size=n)
            tau = threshold_at_tpr(det, 0.95)
            expected = -((-19 * n) // 20)  # ceil(0.95 n) in exact integer arithmetic
            if int(np.sum(det > tau)) != expected:
                ok = False

        elapsed = time.monotonic() - start
        ok = ok and elapsed < 60.0
        assert _report(f"criterion 3: metric-oracle equivalence ({elapsed:.1f}s)", ok)


# -------------------------------------------------------------------------
# 4. Numerical stability of the energy kernels.
# -------------------------------------------------------------------------

class TestCriterion4NumericalStability:
    def test_stability(self):
        rng = np.random.default_rng(5)
        ok = True
        extremes = [np.array([1e6, -1e6, 0.0]), np.array([1e6] * 4),
                    np.array([-1e6] * 4), np.array([1e6, 999999.0, -1e6])]
        for logits in extremes:
            means = ClusterMeans(np.tile(np.sign(logits) + 0.5, (logits.size, 1)))
            ok = ok and math.isfinite(free_energy(logits).value)
            ok = ok and math.isfinite(semantic_energy(logits, means).value)

        for _ in range(200):
            logits = rng.normal(size=6) * 10
            c = float(rng.normal() * 100)
            base = free_energy(logits).value
            shifted = free_energy(logits + c).value
            if abs(shifted - (base - c)) > 1e-9 * max(1.0, abs(base - c)):
                ok = False
        assert _report("criterion 4: numerical stability", ok)


# -------------------------------------------------------------------------
# 5. End-to-end toy experiment.
# -------------------------------------------------------------------------

class TestCriterion5EndToEnd:
    def test_toy_experiment(self):
        start = time.monotonic()
        spec = SyntheticSpec(num_classes=4, input_dim=2, ood_train_kind="uniform",
                             ood_test_kind="ring", n_train_in=4000, n_train_out=8000,
                             n_test_in=1000, n_test_out=1000, seed=0)
        dataset = generate(spec)
        config = default_config_for(dataset, seed=0, mode="cfl_mlse", warmup_epochs=1,
                                    epochs=30, lambda_=0.1, temperature=1.0)
        result = train(config, dataset)

        x_in, y_in = dataset.features_labels("test", "in")
        x_out, _ = dataset.features_labels("test", "out")
        trace_in = forward_batch(result.state, x_in)
        trace_out = forward_batch(result.state, x_out)
        acc = float(np.mean(np.argmax(trace_in.logits, axis=1) == y_in))

        e_in = semantic_energy_batch(trace_in.logits, result.means)
        e_out = semantic_energy_batch(trace_out.logits, result.means)
        samples = (make_samples(-e_in, []) + make_samples([], -e_out))
        area = auroc(samples)
        tau = threshold_at_tpr(-e_in, 0.95)
        fpr95 = float(np.mean(-e_out > tau))
        elapsed = time.monotonic() - start

        ok = acc >= 0.95 and area >= 0.97 and fpr95 <= 0.10 and elapsed < 120.0
        assert _report(
            f"criterion 5: end-to-end toy experiment "
            f"(acc={acc:.3f}, auroc={area:.4f}, fpr95={fpr95:.3f}, {elapsed:.1f}s)", ok)


# -------------------------------------------------------------------------
# 6. Relative ordering of the ablation modes.
# -------------------------------------------------------------------------

def _mode_energies(result, config, trace, mode):
    if mode == "cfl_mlse":
        values = semantic_energy_batch(trace.logits, result.means, config.temperature)
        for idx, w in zip(config.layer_energy.layer_indices, config.layer_energy.layer_weights):
            values = values + w * free_energy_batch(trace.hidden[idx], config.temperature)
        return values
    if mode == "energy_baseline":
        return free_energy_batch(trace.logits, config.temperature)
    return softmax_score_batch(trace.logits, config.temperature)


class TestCriterion6RelativeOrdering:
    def test_mode_ordering_over_seeds(self):
        # Harder geometry than criterion 5: fuzzy clusters, auxiliary ring
        # outliers for training, an unseen uniform mixture (near + far) for
        # testing. Each mode is scored with its own scorer.
        mean_auroc, mean_overlap = {}, {}
        for mode in ("cfl_mlse", "energy_baseline", "softmax_baseline"):
            aurocs, overlaps = [], []
            for seed in range(5):
                spec = SyntheticSpec(num_classes=4, input_dim=2, r_c=4.0, in_std=1.0,
                                     ood_train_kind="ring", ood_test_kind="uniform",
                                     n_train_in=4000, n_train_out=8000,
                                     n_test_in=1000, n_test_out=1000, seed=seed)
                dataset = generate(spec)
                config = default_config_for(dataset, seed=seed, mode=mode)
                result = train(config, dataset)
                x_in, _ = dataset.features_labels("test", "in")
                x_out, _ = dataset.features_labels("test", "out")
                e_in = _mode_energies(result, config, forward_batch(result.state, x_in), mode)
                e_out = _mode_energies(result, config, forward_batch(result.state, x_out), mode)
                aurocs.append(auroc(make_samples(-e_in, -e_out)))
                overlaps.append(overlap_coefficient(-e_in, -e_out))
            mean_auroc[mode] = float(np.mean(aurocs))
            mean_overlap[mode] = float(np.mean(overlaps))

        ok = (mean_auroc["cfl_mlse"] >= mean_auroc["energy_baseline"]
              >= mean_auroc["softmax_baseline"]
              and mean_overlap["cfl_mlse"] <= mean_overlap["softmax_baseline"])
        assert _report(
            "criterion 6: relative ordering "
            f"(auroc cfl_mlse={mean_auroc['cfl_mlse']:.4f} >= "
            f"energy={mean_auroc['energy_baseline']:.4f} >= "
            f"softmax={mean_auroc['softmax_baseline']:.4f}; "
            f"overlap {mean_overlap['cfl_mlse']:.3f} <= {mean_overlap['softmax_baseline']:.3f})",
            ok)


# -------------------------------------------------------------------------
# 7. Determinism and persistence.
# -------------------------------------------------------------------------

class TestCriterion7Determinism:
    def test_byte_identical_pipeline(self, tmp_path):
        spec = {"num_classes": 3, "input_dim": 2, "n_train_in": 600, "n_train_out": 1200,
                "n_test_in": 300, "n_test_out": 300, "seed": 4}
        cfg = {"network": {"input_dim": 2, "hidden_dims": [16, 16], "num_classes": 3,
                           "seed": 4},
               "mode": "cfl_mlse", "epochs": 6, "seed": 4}
        spec_path = tmp_path / "spec.json"
        spec_path.write_text(json.dumps(spec))
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps(cfg))

        outputs = []
        for run in ("a", "b"):
            d = tmp_path / run
            d.mkdir()
            data, ckpt = d / "data.csv", d / "ckpt.json"
            scores, report = d / "scores.csv", d / "report.json"
            assert main(["gen-data", "--config", str(spec_path), "--out", str(data)]) == 0
            assert main(["train", "--config", str(cfg_path), "--in", str(data),
                         "--out", str(ckpt)]) == 0
            assert main(["score", "--checkpoint", str(ckpt), "--in", str(data),
                         "--out", str(scores)]) == 0
            assert main(["eval", "--in", str(scores), "--out", str(report)]) == 0
            outputs.append((ckpt.read_bytes(), report.read_bytes(), scores.read_bytes()))

        identical = outputs[0] == outputs[1]

        # checkpoint round trip reproduces scores bitwise
        d = tmp_path / "a"
        reloaded = load_checkpoint(d / "ckpt.json")
        resaved = tmp_path / "resaved.json"
        save_checkpoint(reloaded, resaved)
        rescored = tmp_path / "rescored.csv"
        assert main(["score", "--checkpoint", str(resaved), "--in", str(d / "data.csv"),
                     "--out", str(rescored)]) == 0
        round_trip = rescored.read_bytes() == (d / "scores.csv").read_bytes()

        assert _report("criterion 7: determinism and persistence",
                       identical and round_trip)


# -------------------------------------------------------------------------
# 8. EMA contraction.
# -------------------------------------------------------------------------

class TestCriterion8EmaContraction:
    def test_contraction_rate(self):
        rng = np.random.default_rng(2)
        means = ClusterMeans(rng.normal(size=(4, 4)), ema_decay=0.99)
        target = rng.normal(size=4)
        batch = np.tile(target, (3, 1))
        gap0 = float(np.linalg.norm(means.matrix[1] - target))
        for _ in range(200):
            means = ema_update(means, batch, [1, 1, 1])
        gap = float(np.linalg.norm(means.matrix[1] - target))
        ok = gap <= (0.99 ** 200 + 1e-12) * gap0
        assert _report(f"criterion 8: EMA contraction (factor {gap / gap0:.6f} "
                       f"<= {0.99 ** 200:.6f})", ok)
