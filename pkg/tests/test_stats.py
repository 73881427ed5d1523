"""Metrics against counting oracles; resampling comparisons against
enumeration, antisymmetry, and coverage."""

from itertools import product

import numpy as np
import pytest

from sigfuse.errors import InvalidInput
from sigfuse.stats import (
    DEFAULT_METRICS,
    DiffResult,
    bayes_compare,
    bootstrap_diff,
    diff_table_csv,
    evaluate,
    minority_macro_f1,
    percentile_interval,
    resample_indices,
    run_ablation,
)


def metrics_oracle(y_true, y_pred, n_classes):
    """Brute-force per-class confusion cells by direct counting."""
    per_class = []
    for c in range(n_classes):
        tp = sum(1 for t, p in zip(y_true, y_pred) if t == c and p == c)
        fp = sum(1 for t, p in zip(y_true, y_pred) if t != c and p == c)
        fn = sum(1 for t, p in zip(y_true, y_pred) if t == c and p != c)
        tn = sum(1 for t, p in zip(y_true, y_pred) if t != c and p != c)
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        f1 = (2 * precision * recall / (precision + recall)
              if precision + recall else 0.0)
        specificity = tn / (tn + fp) if tn + fp else 0.0
        per_class.append((precision, recall, f1, specificity, tp + fn))
    accuracy = sum(1 for t, p in zip(y_true, y_pred) if t == p) / len(y_true)
    return accuracy, per_class


class TestEvaluate:
    def test_perfect_predictions(self):
        y = [0, 1, 2, 0, 1]
        cm, m = evaluate(y, y, ["a", "b", "c"])
        assert m.accuracy == 1.0
        for pc in m.per_class:
            assert pc.precision == pc.recall == pc.f1 == pc.specificity == 1.0

    def test_schema_has_per_class_and_averages(self):
        # Per-class precision/recall/F1/specificity/support plus weighted and
        # macro rows, the published table layout.
        _cm, m = evaluate([0, 1, 1, 0], [0, 1, 0, 0], ["neg", "pos"])
        doc = m.as_dict()
        assert {"precision", "recall", "f1", "specificity", "support"} <= set(doc["per_class"][0])
        assert {"accuracy", "weighted_precision", "weighted_recall", "weighted_f1",
                "macro_f1"} <= set(doc)

    def test_matches_counting_oracle_exhaustively(self):
        # Every achievable confusion matrix for <= 5 samples over 3 classes:
        # enumerate all (true, pred) pair vectors.
        for n in range(1, 5):
            for true_tuple in product(range(3), repeat=n):
                y_true = np.array(true_tuple)
                for pred_tuple in product(range(3), repeat=n):
                    y_pred = np.array(pred_tuple)
                    _cm, m = evaluate(y_true, y_pred, ["a", "b", "c"])
                    acc, per_class = metrics_oracle(y_true, y_pred, 3)
                    assert abs(m.accuracy - acc) < 1e-12
                    for got, want in zip(m.per_class, per_class):
                        assert abs(got.precision - want[0]) < 1e-12
                        assert abs(got.recall - want[1]) < 1e-12
                        assert abs(got.f1 - want[2]) < 1e-12
                        assert abs(got.specificity - want[3]) < 1e-12
                        assert got.support == want[4]

    def test_matches_oracle_on_length_8_vectors(self, rng):
        # Length-8 instances sampled densely (the full cross product is
        # enumerated per confusion-cell multiset above at smaller n).
        for _ in range(400):
            y_true = rng.integers(0, 3, size=8)
            y_pred = rng.integers(0, 3, size=8)
            _cm, m = evaluate(y_true, y_pred, ["a", "b", "c"])
            acc, per_class = metrics_oracle(y_true, y_pred, 3)
            assert abs(m.accuracy - acc) < 1e-12
            for got, want in zip(m.per_class, per_class):
                assert abs(got.f1 - want[2]) < 1e-12
                assert abs(got.specificity - want[3]) < 1e-12

    def test_weighted_recall_equals_accuracy(self, rng):
        for _ in range(200):
            n = int(rng.integers(1, 40))
            k = int(rng.integers(2, 5))
            y_true = rng.integers(0, k, size=n)
            y_pred = rng.integers(0, k, size=n)
            _cm, m = evaluate(y_true, y_pred, [f"c{i}" for i in range(k)])
            assert abs(m.weighted_recall - m.accuracy) < 1e-12

    def test_zero_denominator_flagged(self):
        # Class 2 never occurs and is never predicted.
        _cm, m = evaluate([0, 1], [1, 0], ["a", "b", "c"])
        assert m.per_class[2].empty_denominator
        assert m.per_class[2].precision == 0.0

    def test_length_mismatch_rejected(self):
        with pytest.raises(InvalidInput):
            evaluate([0, 1], [0])

    def test_minority_macro_f1(self):
        y_true = [0, 0, 0, 1, 2]
        y_pred = [0, 0, 0, 1, 1]
        got = minority_macro_f1(y_true, y_pred, [1, 2], 3)
        # class1: P=.5 R=1 F1=2/3; class2: F1=0.
        assert abs(got - (2 / 3 + 0.0) / 2) < 1e-12


class TestBootstrapDiff:
    def test_identical_models_all_zero(self):
        y = np.array([0, 1, 2, 1, 0, 2])
        pred = np.array([0, 1, 1, 1, 0, 2])
        res = bootstrap_diff(y, pred, pred, "accuracy", 200, seed=0)
        assert res.mean_diff == 0.0
        assert res.ci95 == (0.0, 0.0)
        assert np.all(res.samples == 0.0)
        assert res.p_gt0 == 0.0 and res.p_le0 == 1.0

    def test_exhaustive_enumeration_oracle(self):
        # n=4: average the metric difference over all 4^4 equally likely
        # index tuples and compare with the Monte-Carlo mean at B=10000.
        y = np.array([0, 1, 2, 0])
        a = np.array([0, 1, 2, 1])
        b = np.array([0, 0, 2, 0])
        diff_per = (a == y).astype(float) - (b == y).astype(float)
        exact = np.mean([diff_per[list(tup)].mean()
                         for tup in product(range(4), repeat=4)])
        res = bootstrap_diff(y, a, b, "accuracy", 10000, seed=3)
        sigma = res.samples.std() / np.sqrt(res.samples.size)
        assert abs(res.mean_diff - exact) <= 3 * sigma + 1e-12

    def test_antisymmetry(self):
        rng = np.random.default_rng(1)
        y = rng.integers(0, 3, 30)
        a = rng.integers(0, 3, 30)
        b = rng.integers(0, 3, 30)
        for metric in DEFAULT_METRICS:
            ab = bootstrap_diff(y, a, b, metric, 500, seed=7)
            ba = bootstrap_diff(y, b, a, metric, 500, seed=7)
            np.testing.assert_array_equal(ab.samples, -ba.samples)
            assert abs(ab.mean_diff + ba.mean_diff) < 1e-15
            np.testing.assert_allclose(sorted([ab.ci95[0], ab.ci95[1]]),
                                       sorted([-ba.ci95[1], -ba.ci95[0]]), atol=1e-12)

    def test_deterministic_per_seed_and_metric(self):
        y = np.array([0, 1, 0, 1, 1, 0])
        a = np.array([0, 1, 1, 1, 0, 0])
        b = np.array([1, 1, 0, 0, 1, 0])
        r1 = bootstrap_diff(y, a, b, "f1", 300, seed=11)
        r2 = bootstrap_diff(y, a, b, "f1", 300, seed=11)
        np.testing.assert_array_equal(r1.samples, r2.samples)

    def test_coverage_calibration(self):
        # Percentile interval machinery on a known Gaussian mean: the 95%
        # interval should cover the truth ~95% of the time (+-3%).
        mu, sd, n, reps, boots = 0.3, 1.0, 40, 500, 400
        rng = np.random.default_rng(2024)
        covered = 0
        for _ in range(reps):
            d = rng.normal(mu, sd, size=n)
            idx = resample_indices(n, boots, rng)
            deltas = d[idx].mean(axis=1)
            lo, hi = percentile_interval(deltas)
            covered += int(lo <= mu <= hi)
        rate = covered / reps
        assert 0.92 <= rate <= 0.98, rate

    def test_small_b_rejected(self):
        y = np.array([0, 1, 0, 1])
        with pytest.raises(InvalidInput):
            bootstrap_diff(y, y, y, "accuracy", 10, seed=0)


class TestBayesCompare:
    def test_identical_predictions_zero_posterior(self):
        y = np.array([0, 1, 2, 1])
        res = bayes_compare(y, y, y, ("accuracy",), 200, seed=0)[0]
        assert res.p_gt0 == 0.0
        assert np.all(res.samples == 0.0)

    def test_strict_dominance(self):
        y = np.array([0, 1, 2, 0, 1, 2])
        perfect = y.copy()
        wrong = (y + 1) % 3
        res = bayes_compare(y, perfect, wrong, ("accuracy",), 300, seed=1)[0]
        assert res.p_gt0 == 1.0
        assert np.all(res.samples > 0)
        assert res.mean_diff == 1.0

    def test_same_engine_as_bootstrap(self):
        rng = np.random.default_rng(3)
        y = rng.integers(0, 3, 40)
        a = rng.integers(0, 3, 40)
        b = rng.integers(0, 3, 40)
        boot = bootstrap_diff(y, a, b, "accuracy", 400, seed=5)
        bayes = bayes_compare(y, a, b, ("accuracy",), 400, seed=5)[0]
        assert bayes.mean_diff == boot.mean_diff
        np.testing.assert_array_equal(np.sort(boot.samples), bayes.samples)

    def test_samples_sorted_for_violins(self):
        rng = np.random.default_rng(4)
        y = rng.integers(0, 2, 30)
        a = rng.integers(0, 2, 30)
        b = rng.integers(0, 2, 30)
        res = bayes_compare(y, a, b, ("accuracy",), 200, seed=0)[0]
        assert np.all(np.diff(res.samples) >= 0)


class TestAblation:
    def _preds(self):
        rng = np.random.default_rng(9)
        y = rng.integers(0, 3, 60)
        models = {}
        for i, err in enumerate((0.0, 0.1, 0.2, 0.3, 0.5)):
            noise = rng.random(60) < err
            pred = np.where(noise, (y + 1) % 3, y)
            models[f"m{i}"] = pred
        return y, models

    def test_five_models_five_rows(self):
        y, models = self._preds()
        result = run_ablation(models, y, pairs=[("m0", "m1", "complementarity")],
                              n_boot=200, seed=0)
        assert len(result.rows) == 5
        assert result.rows[0].metrics.accuracy >= result.rows[-1].metrics.accuracy
        csv = result.table_csv()
        assert csv.splitlines()[0].startswith("model,accuracy")
        assert len(csv.strip().splitlines()) == 6

    def test_duplicate_model_zero_diff(self):
        y, models = self._preds()
        models["dup"] = models["m1"].copy()
        result = run_ablation(models, y, pairs=[("dup", "m1", "redundancy")],
                              n_boot=200, seed=0)
        for d in result.diffs:
            assert d.mean_diff == 0.0
            assert d.p_gt0 == 0.0

    def test_needs_two_models(self):
        y, models = self._preds()
        with pytest.raises(InvalidInput):
            run_ablation({"only": models["m0"]}, y)


class TestCsvSchemas:
    def test_diff_table_columns(self):
        res = DiffResult("accuracy", 0.05, (0.01, 0.09), 0.012, 0.988,
                         samples=np.array([0.05]), label="complementarity")
        csv = diff_table_csv([res], comparison="h1_vs_2d")
        header = csv.splitlines()[0].split(",")
        assert header == ["comparison", "label", "metric", "mean_diff",
                          "ci_lo", "ci_hi", "p_le0", "p_gt0"]
        row = csv.splitlines()[1].split(",")
        assert row[2] == "accuracy" and float(row[3]) == 0.05
