import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from semenergy.metrics import (
    ScoredSample,
    aupr,
    auroc,
    evaluate,
    fpr_at_tpr,
    overlap_coefficient,
    score_histograms,
)


def make_samples(in_scores, out_scores):
    return ([ScoredSample(float(s), True) for s in in_scores]
            + [ScoredSample(float(s), False) for s in out_scores])


def auroc_brute_force(samples):
    """O(n^2) all-pairs oracle: P(in > out) + 0.5 * P(in == out)."""
    ins = [s.score for s in samples if s.is_in]
    outs = [s.score for s in samples if not s.is_in]
    total = 0.0
    for a in ins:
        for b in outs:
            if a > b:
                total += 1.0
            elif a == b:
                total += 0.5
    return total / (len(ins) * len(outs))


def aupr_brute_force(samples, positive="in"):
    """Per-threshold precision/recall enumeration with full rescans."""
    if positive == "in":
        pos = [s.score for s in samples if s.is_in]
        neg = [s.score for s in samples if not s.is_in]
    else:
        pos = [-s.score for s in samples if not s.is_in]
        neg = [-s.score for s in samples if s.is_in]
    thresholds = sorted(set(pos + neg), reverse=True)
    area, recall_prev = 0.0, 0.0
    for th in thresholds:
        tp = sum(1 for s in pos if s >= th)
        fp = sum(1 for s in neg if s >= th)
        recall = tp / len(pos)
        precision = tp / (tp + fp)
        area += (recall - recall_prev) * precision
        recall_prev = recall
    return area


class TestFprAtTpr:
    def test_perfect_separation(self):
        fpr, _ = fpr_at_tpr(make_samples([10, 11, 12, 13], [1, 2, 3]), 0.95)
        assert fpr == 0.0

    def test_identical_multisets(self, rng):
        base = list(rng.normal(size=400))
        fpr, _ = fpr_at_tpr(make_samples(base, list(base)), 0.95)
        assert fpr == pytest.approx(0.95, abs=0.01)

    def test_inverted(self):
        fpr, _ = fpr_at_tpr(make_samples([1, 2, 3], [10, 11, 12]), 0.95)
        assert fpr == 1.0

    def test_monotone_in_target(self, rng):
        samples = make_samples(rng.normal(size=300), rng.normal(loc=-1.0, size=200))
        values = [fpr_at_tpr(samples, t)[0] for t in (0.5, 0.7, 0.9, 0.95, 0.99)]
        assert all(a <= b for a, b in zip(values, values[1:]))

    def test_single_class_rejected(self):
        with pytest.raises(ValueError):
            fpr_at_tpr([ScoredSample(1.0, True)], 0.95)


class TestAuroc:
    def test_perfect(self):
        assert auroc(make_samples([5, 6], [1, 2])) == 1.0

    def test_all_ties(self):
        assert auroc(make_samples([3, 3, 3], [3, 3])) == 0.5

    def test_hand_enumerated_pairs(self):
        assert auroc(make_samples([3, 1], [2, 0])) == 0.75

    def test_matches_brute_force_with_ties(self, rng):
        for _ in range(25):
            n_in = int(rng.integers(2, 60))
            n_out = int(rng.integers(2, 60))
            ins = rng.integers(0, 10, size=n_in).astype(float)
            outs = rng.integers(0, 10, size=n_out).astype(float)
            samples = make_samples(ins, outs)
            assert auroc(samples) == auroc_brute_force(samples)

    def test_invariant_under_monotone_transform(self, rng):
        ins = rng.normal(size=40)
        outs = rng.normal(loc=-0.5, size=30)
        base = auroc(make_samples(ins, outs))
        assert auroc(make_samples(np.exp(ins), np.exp(outs))) == base
        assert auroc(make_samples(3 * ins + 7, 3 * outs + 7)) == base

    def test_flip_symmetry(self, rng):
        ins = rng.integers(0, 6, size=30).astype(float)
        outs = rng.integers(0, 6, size=20).astype(float)
        forward = auroc(make_samples(ins, outs))
        flipped = auroc(make_samples(-outs, -ins))
        assert flipped == pytest.approx(forward, abs=1e-12)

    @given(st.lists(st.integers(0, 5), min_size=1, max_size=30),
           st.lists(st.integers(0, 5), min_size=1, max_size=30))
    @settings(max_examples=50)
    def test_property_matches_oracle(self, ins, outs):
        samples = make_samples(ins, outs)
        assert auroc(samples) == auroc_brute_force(samples)


class TestAupr:
    def test_perfect(self):
        assert aupr(make_samples([5, 6], [1, 2])) == pytest.approx(1.0, abs=1e-12)

    def test_no_separation_approaches_in_fraction(self, rng):
        base = list(rng.normal(size=600))
        samples = make_samples(base, list(base))
        assert aupr(samples) == pytest.approx(0.5, abs=0.01)

    def test_hand_enumerated_steps(self):
        # thresholds 3,2,1,0 -> area 0.5*1.0 + 0.5*(2/3)
        assert aupr(make_samples([3, 1], [2, 0])) == pytest.approx(0.5 + 0.5 * 2 / 3, abs=1e-12)

    def test_matches_brute_force(self, rng):
        for _ in range(20):
            ins = rng.integers(0, 8, size=int(rng.integers(2, 50))).astype(float)
            outs = rng.integers(0, 8, size=int(rng.integers(2, 50))).astype(float)
            samples = make_samples(ins, outs)
            assert aupr(samples) == pytest.approx(aupr_brute_force(samples), abs=1e-12)

    def test_positive_out_flips_problem(self, rng):
        ins = rng.normal(size=30)
        outs = rng.normal(loc=-2.0, size=40)
        samples = make_samples(ins, outs)
        assert aupr(samples, positive="out") == pytest.approx(
            aupr_brute_force(samples, positive="out"), abs=1e-12)

    def test_bad_positive(self):
        with pytest.raises(ValueError):
            aupr(make_samples([1], [0]), positive="both")


class TestOverlap:
    def test_disjoint_supports(self):
        assert overlap_coefficient([0.0, 1.0], [10.0, 11.0], bins=4) == 0.0

    def test_identical_lists(self, rng):
        x = rng.normal(size=100)
        assert overlap_coefficient(x, x.copy()) == pytest.approx(1.0, abs=1e-12)

    def test_direct_formula(self):
        ins = [0.0] * 10
        outs = [0.0] * 5 + [10.0] * 5
        assert overlap_coefficient(ins, outs, bins=2) == pytest.approx(0.5, abs=1e-12)

    def test_all_equal_scores(self):
        assert overlap_coefficient([1.0, 1.0], [1.0]) == pytest.approx(1.0, abs=1e-12)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            overlap_coefficient([], [1.0])

    def test_histograms_normalized(self, rng):
        centers, h_in, h_out = score_histograms(rng.normal(size=50), rng.normal(size=70), 20)
        assert len(centers) == 20
        assert h_in.sum() == pytest.approx(1.0, abs=1e-12)
        assert h_out.sum() == pytest.approx(1.0, abs=1e-12)


class TestPermutationInvariance:
    def test_all_metrics(self, rng):
        samples = make_samples(rng.integers(0, 8, 40).astype(float),
                               rng.integers(0, 8, 30).astype(float))
        shuffled = list(samples)
        rng.shuffle(shuffled)
        assert auroc(shuffled) == auroc(samples)
        assert aupr(shuffled) == aupr(samples)
        assert fpr_at_tpr(shuffled, 0.95)[0] == fpr_at_tpr(samples, 0.95)[0]


class TestEvaluate:
    def test_report_fields(self, rng):
        samples = make_samples(rng.normal(loc=5, size=50), rng.normal(size=60))
        report = evaluate(samples)
        assert 0.0 <= report.fpr95 <= 1.0
        assert 0.0 <= report.auroc <= 1.0
        assert 0.0 <= report.aupr <= 1.0
        assert 0.0 <= report.overlap <= 1.0
        assert report.n_in == 50 and report.n_out == 60
        assert '"auroc"' in report.to_json()
