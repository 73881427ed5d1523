"""Adaptive oversampling behavior and fidelity metrics."""

import json

import numpy as np
import pytest

from sigfuse.balance import (
    AdasynConfig,
    FidelityReport,
    adasyn,
    build_fidelity_report,
    frechet_distance,
    intra_class_variance,
    radar_export,
    radar_parse,
)
from sigfuse.errors import InvalidInput, SkippedClassWarning


def two_cluster_data(rng, n_a=30, n_b=12, d=4, spread=0.3, gap=6.0):
    a = rng.normal(0, spread, size=(n_a, d))
    b = rng.normal(gap, spread, size=(n_b, d))
    x = np.vstack([a, b])
    y = np.array([0] * n_a + [1] * n_b)
    return x, y


class TestAdasyn:
    def test_balanced_input_no_synthesis(self, rng):
        x = rng.normal(size=(40, 3))
        y = np.array([0, 1] * 20)
        res = adasyn(x, y, AdasynConfig(k=5, seed=0))
        assert res.synthetic_mask.sum() == 0
        assert all(v == 0 for v in res.synth_counts.values())
        np.testing.assert_array_equal(res.features, x)

    def test_total_counts_match_balance_formula(self, rng):
        # Majority 100 against minorities 46/44/45: the per-class budgets are
        # G = (m_l - m_s) * beta = 54/56/55 at beta=1. Realized counts are
        # sums of per-sample roundings, so each can drift from its budget by
        # at most half a unit per contributing seed sample.
        sizes = {0: 46, 1: 44, 2: 45, 3: 100}
        parts, labels = [], []
        for c, n in sizes.items():
            parts.append(rng.normal(3.0 * c, 1.0, size=(n, 5)))
            labels += [c] * n
        x = np.vstack(parts)
        y = np.array(labels)
        res = adasyn(x, y, AdasynConfig(k=5, beta=1.0, seed=1))
        budgets = {0: 54, 1: 56, 2: 55, 3: 0}
        for c, m_s in sizes.items():
            assert budgets[c] == (100 - m_s) * 1.0  # the balance formula
            slack = int(np.ceil(m_s / 2))
            assert abs(res.synth_counts[c] - budgets[c]) <= slack, (c, res.synth_counts[c])
        assert res.synth_counts[3] == 0
        # Classes end within rounding slack of the majority count.
        counts = np.bincount(res.labels)
        for c, m_s in sizes.items():
            assert abs(int(counts[c]) - 100) <= int(np.ceil(m_s / 2))

    def test_beta_one_balances_within_slack(self, rng):
        x, y = two_cluster_data(rng, n_a=50, n_b=17)
        res = adasyn(x, y, AdasynConfig(k=5, beta=1.0, seed=2))
        counts = np.bincount(res.labels)
        # Rounding slack: each seed sample's allocation rounds independently.
        assert abs(counts[1] - counts[0]) <= len(np.unique(res.labels)) + np.sum(y == 1)
        assert counts[1] >= 0.8 * counts[0]

    def test_originals_untouched_and_first(self, rng):
        x, y = two_cluster_data(rng)
        res = adasyn(x, y, AdasynConfig(k=3, seed=3))
        n = x.shape[0]
        np.testing.assert_array_equal(res.features[:n], x)
        np.testing.assert_array_equal(res.labels[:n], y)
        assert not res.synthetic_mask[:n].any()
        assert res.synthetic_mask[n:].all()

    def test_synthetic_points_on_segments(self, rng):
        x, y = two_cluster_data(rng)
        res = adasyn(x, y, AdasynConfig(k=4, seed=4))
        assert res.synthetic_mask.sum() > 0
        n = x.shape[0]
        for row, (c, i, z, lam) in zip(res.features[n:], res.provenance):
            assert y[i] == c and y[z] == c
            assert 0.0 <= lam <= 1.0
            np.testing.assert_allclose(row, x[i] + lam * (x[z] - x[i]), atol=1e-12)

    def test_boundary_cluster_gets_all_synthesis(self, rng):
        # Minority splits into a pure far cluster (no foreign neighbors) and a
        # boundary cluster embedded in the majority.
        majority = rng.normal(0.0, 0.5, size=(40, 2))
        boundary = rng.normal(0.0, 0.5, size=(6, 2))
        pure = rng.normal(50.0, 0.5, size=(6, 2))
        x = np.vstack([majority, boundary, pure])
        y = np.array([0] * 40 + [1] * 12)
        res = adasyn(x, y, AdasynConfig(k=5, beta=1.0, seed=5))
        assert res.synthetic_mask.sum() > 0
        boundary_idx = set(range(40, 46))
        for _c, i, _z, _lam in res.provenance:
            assert i in boundary_idx, "synthesis seeded from the pure cluster"

    def test_single_sample_class_skipped_with_warning(self, rng):
        x = np.vstack([rng.normal(size=(10, 2)), rng.normal(5, 1, size=(1, 2))])
        y = np.array([0] * 10 + [1])
        with pytest.warns(SkippedClassWarning):
            res = adasyn(x, y, AdasynConfig(k=5, seed=6))
        assert res.synth_counts[1] == 0
        assert 1 in res.skipped_classes

    def test_deterministic_given_seed(self, rng):
        x, y = two_cluster_data(rng)
        a = adasyn(x, y, AdasynConfig(k=4, seed=7))
        b = adasyn(x, y, AdasynConfig(k=4, seed=7))
        np.testing.assert_array_equal(a.features, b.features)
        assert a.provenance == b.provenance


class TestIntraClassVariance:
    def test_identical_members_zero(self):
        x = np.tile([1.0, 2.0, 3.0], (6, 1))
        y = np.zeros(6, dtype=int)
        mask = np.array([False] * 3 + [True] * 3)
        real, synth, flags = intra_class_variance(x, y, mask, n_classes=1)
        assert real[0] == 0.0 and synth[0] == 0.0 and not flags[0]

    def test_matches_two_pass_oracle(self, rng):
        x = rng.normal(size=(40, 6))
        y = rng.integers(0, 3, size=40)
        mask = rng.random(40) < 0.4
        real, synth, _ = intra_class_variance(x, y, mask, n_classes=3)
        for c in range(3):
            for subset, got in ((x[(y == c) & ~mask], real[c]), (x[(y == c) & mask], synth[c])):
                if subset.shape[0] < 2:
                    assert got == 0.0
                    continue
                mean = subset.sum(axis=0) / subset.shape[0]
                var = ((subset - mean) ** 2).sum(axis=0) / subset.shape[0]
                assert abs(got - var.mean()) < 1e-9

    def test_small_subset_flagged(self):
        x = np.ones((3, 2))
        y = np.zeros(3, dtype=int)
        mask = np.array([False, False, True])  # one synthetic member only
        _real, synth, flags = intra_class_variance(x, y, mask, n_classes=1)
        assert synth[0] == 0.0 and flags[0]


class TestFrechetDistance:
    def test_identical_sets_zero(self, rng):
        a = rng.normal(size=(200, 5))
        assert frechet_distance(a, a) < 1e-6

    def test_one_dimensional_gaussians(self):
        rng = np.random.default_rng(99)
        a = rng.normal(0.0, 1.0, size=(10000, 1))
        b = rng.normal(3.0, 1.0, size=(10000, 1))
        fd = frechet_distance(a, b)
        assert abs(fd - 9.0) < 0.5  # (mu diff)^2 + (sd diff)^2 = 9 + ~0

    def test_symmetry(self, rng):
        a = rng.normal(size=(60, 4))
        b = rng.normal(1.0, 2.0, size=(80, 4))
        assert abs(frechet_distance(a, b) - frechet_distance(b, a)) < 1e-6

    def test_nonnegative(self, rng):
        for _ in range(5):
            a = rng.normal(size=(30, 3))
            b = rng.normal(size=(30, 3))
            assert frechet_distance(a, b) >= 0.0

    def test_dimension_mismatch_rejected(self, rng):
        with pytest.raises(InvalidInput):
            frechet_distance(rng.normal(size=(10, 2)), rng.normal(size=(10, 3)))

    def test_closed_form_full_covariance(self, rng):
        # Diagonal-covariance closed form: sum over dims of
        # (mu_a - mu_b)^2 + (sd_a - sd_b)^2.
        n = 60000
        a = rng.normal([0.0, 1.0], [1.0, 2.0], size=(n, 2))
        b = rng.normal([2.0, 1.0], [1.5, 2.0], size=(n, 2))
        expected = (2.0**2 + (1.5 - 1.0) ** 2)
        assert abs(frechet_distance(a, b) - expected) < 0.15


class TestFidelityReport:
    def _report(self):
        rng = np.random.default_rng(1)
        x = rng.normal(size=(30, 4))
        y = rng.integers(0, 3, size=30)
        mask = np.zeros(30, dtype=bool)
        mask[20:] = True
        return build_fidelity_report(x, y, mask, ["a", "b", "c"], {0: 4, 1: 3, 2: 3})

    def test_schema_keys(self):
        doc = json.loads(radar_export(self._report()))
        assert set(doc) >= {"classes", "real_variance", "synthetic_variance",
                            "fid", "synth_counts"}
        assert len(doc["classes"]) == 3
        assert len(doc["real_variance"]) == len(doc["synthetic_variance"]) == 3
        assert doc["fid"] >= 0.0

    def test_equal_series_for_identical_values(self):
        rep = FidelityReport(["a", "b"], [1.0, 2.0], [1.0, 2.0], 0.5, [3, 4], [False, False])
        doc = json.loads(radar_export(rep))
        assert doc["real_variance"] == doc["synthetic_variance"]

    def test_round_trip(self):
        rep = self._report()
        back = radar_parse(radar_export(rep))
        assert back == rep


class TestAugmentedCsv:
    def test_synthetic_column(self, tmp_path, rng):
        x, y = two_cluster_data(rng)
        res = adasyn(x, y, AdasynConfig(k=4, seed=4))
        from sigfuse.balance import augmented_to_csv
        path = tmp_path / "aug.csv"
        augmented_to_csv(res, path)
        lines = path.read_text().strip().splitlines()
        assert lines[0].startswith("label,synthetic,f0")
        assert len(lines) == 1 + res.features.shape[0]
        n = x.shape[0]
        flags = [int(l.split(",")[1]) for l in lines[1:]]
        assert flags[:n] == [0] * n
        assert all(f == 1 for f in flags[n:]) and len(flags) > n
