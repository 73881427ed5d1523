"""Pipeline orchestration and the command-line surface."""

import hashlib
import json

import numpy as np
import pytest

from sigfuse.cli import main
from sigfuse.config import load_config, resolve_config
from sigfuse.errors import ConfigError
from sigfuse.pipeline import run_pipeline
from sigfuse.stats import bootstrap_diff

TINY = {
    "seed": 5,
    "data": {"synthetic": {"n_patients": 12, "signals_per_patient": 5, "length": 128}},
    "views": {"scalogram_rows": 16, "scalogram_cols": 16, "n_scales": 12},
    "train": {"epochs": 4, "batch_size": 16},
    "bootstrap": {"iterations": 200},
    "output": {"figures": False},
}

EXPECTED_ARTIFACTS = [
    "ablation.csv", "complementarity.json", "diff_bootstrap.csv", "diff_bayes.csv",
    "metrics.json", "predictions.csv", "labels.csv", "histories.json",
    "cnn1d.weights", "cnn2d.weights", "transformer.weights",
    "hybrid1.weights", "hybrid2.weights",
]


@pytest.fixture(scope="module")
def tiny_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("runs") / "tiny"
    cfg = resolve_config(TINY)
    result = run_pipeline(cfg, out)
    return cfg, result


class TestConfig:
    def test_defaults_resolve(self):
        cfg = resolve_config({})
        assert cfg["seed"] == 0
        assert cfg["train"]["overrides"]["hybrid1"]["loss"] == "complementary"

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError):
            resolve_config({"nonsense": 1})
        with pytest.raises(ConfigError):
            resolve_config({"train": {"lr": 0.1, "bogus": 2}})

    def test_type_checked(self):
        with pytest.raises(ConfigError):
            resolve_config({"seed": "zero"})
        with pytest.raises(ConfigError):
            resolve_config({"adasyn": {"enabled": "yes"}})

    def test_override_model_names_validated(self):
        with pytest.raises(ConfigError):
            resolve_config({"train": {"overrides": {"notamodel": {"lr": 0.1}}}})

    def test_directory_source_requires_path(self):
        with pytest.raises(ConfigError):
            resolve_config({"data": {"source": "directory"}})

    def test_load_config_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "nope.json")

    def test_threads_must_be_one(self):
        with pytest.raises(ConfigError):
            resolve_config({"threads": 4})


class TestPipeline:
    def test_artifact_inventory(self, tiny_run):
        _cfg, result = tiny_run
        for name in EXPECTED_ARTIFACTS:
            assert name in result.artifacts, name
            assert (result.out_dir / name).exists()
        manifest = json.loads((result.out_dir / "run_manifest.json").read_text())
        assert manifest["patient_disjoint"] is True
        assert manifest["adasyn"]["provenance_within_train"] is True
        # Recorded hashes match the files on disk.
        for rel, digest in manifest["artifacts"].items():
            got = hashlib.sha256((result.out_dir / rel).read_bytes()).hexdigest()
            assert got == digest, rel

    def test_metrics_for_all_five_models(self, tiny_run):
        _cfg, result = tiny_run
        assert set(result.test_metrics) == {"cnn1d", "cnn2d", "transformer",
                                            "hybrid1", "hybrid2"}
        doc = json.loads((result.out_dir / "metrics.json").read_text())
        for model in result.test_metrics:
            assert "confusion" in doc[model]

    def test_predictions_align_with_labels(self, tiny_run):
        _cfg, result = tiny_run
        lines = (result.out_dir / "predictions.csv").read_text().strip().splitlines()
        assert len(lines) == 1 + result.y_test.size
        labels = [int(v) for v in (result.out_dir / "labels.csv").read_text().split()]
        np.testing.assert_array_equal(labels, result.y_test)

    def test_complementarity_report_written(self, tiny_run):
        _cfg, result = tiny_run
        doc = json.loads((result.out_dir / "complementarity.json").read_text())
        assert len(doc["pairs"]) == 3
        assert doc["best_pair"] is not None
        assert set(doc["thresholds"]) == {"eps", "delta", "gamma", "tau_mi", "tau_ortho"}

    def test_rerun_with_snapshot_identical_tables(self, tiny_run, tmp_path):
        cfg, result = tiny_run
        snapshot = json.loads((result.out_dir / "config.json").read_text())
        assert snapshot == cfg
        rerun_dir = tmp_path / "rerun"
        run_pipeline(snapshot, rerun_dir)
        for name in EXPECTED_ARTIFACTS:
            a = (result.out_dir / name).read_bytes()
            b = (rerun_dir / name).read_bytes()
            assert hashlib.sha256(a).hexdigest() == hashlib.sha256(b).hexdigest(), name

    def test_skip_adasyn_zeroes_synth_counts(self, tmp_path):
        cfg = resolve_config({**TINY, "adasyn": {"enabled": False}})
        result = run_pipeline(cfg, tmp_path / "noadasyn")
        assert all(v == 0 for v in result.synth_counts.values())
        manifest = json.loads((tmp_path / "noadasyn" / "run_manifest.json").read_text())
        assert all(v == 0 for v in manifest["adasyn"]["synth_counts"].values())
        assert not (tmp_path / "noadasyn" / "fidelity.json").exists()


class TestCli:
    def test_gen_data_deterministic(self, tmp_path):
        rc1 = main(["gen-data", "--out", str(tmp_path / "d1"), "--seed", "3"])
        rc2 = main(["gen-data", "--out", str(tmp_path / "d2"), "--seed", "3"])
        assert rc1 == rc2 == 0
        for rel in ("manifest.json", "class0/signals.csv", "class3/signals.csv"):
            a = (tmp_path / "d1" / rel).read_bytes()
            b = (tmp_path / "d2" / rel).read_bytes()
            assert a == b, rel
        manifest = json.loads((tmp_path / "d1" / "manifest.json").read_text())
        total = 0
        for cname in manifest["class_names"]:
            rows = (tmp_path / "d1" / cname / "signals.csv").read_text().strip().splitlines()
            assert len(rows) == manifest["counts"][cname]
            total += len(rows)
        assert total == manifest["n_signals"]

    def test_pipeline_and_report(self, tmp_path):
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps(TINY))
        rc = main(["pipeline", "--config", str(cfg_path), "--out", str(tmp_path / "run")])
        assert rc == 0
        rc = main(["report", str(tmp_path / "run")])
        assert rc == 0
        figures = list((tmp_path / "run" / "figures").glob("*.png"))
        assert {p.name for p in figures} >= {"heatmaps.png", "ablation.png",
                                             "diff_strip.png", "diff_violin.png",
                                             "training_curves.png"}

    def test_compare_identical_files_zero_table(self, tmp_path):
        labels = tmp_path / "labels.csv"
        labels.write_text("\n".join(str(v) for v in [0, 1, 2, 0, 1, 2]) + "\n")
        rc = main(["compare", f"a={labels}", f"b={labels}", "--labels", str(labels),
                   "--iterations", "200", "--out", str(tmp_path / "cmp")])
        assert rc == 0
        table = (tmp_path / "cmp" / "diff_bootstrap.csv").read_text().strip().splitlines()
        for line in table[1:]:
            cols = line.split(",")
            assert float(cols[3]) == 0.0 and float(cols[7]) == 0.0

    def test_compare_perfect_vs_constant_wrong(self, tmp_path):
        y = [0, 1, 2, 0, 1, 2, 0, 1]
        labels = tmp_path / "labels.csv"
        labels.write_text("\n".join(map(str, y)) + "\n")
        perfect = tmp_path / "perfect.csv"
        perfect.write_text("\n".join(map(str, y)) + "\n")
        wrong = tmp_path / "wrong.csv"
        wrong.write_text("\n".join(str((v + 1) % 3) for v in y) + "\n")
        rc = main(["compare", f"good={perfect}", f"bad={wrong}", "--labels", str(labels),
                   "--iterations", "200", "--out", str(tmp_path / "cmp2")])
        assert rc == 0
        row = (tmp_path / "cmp2" / "diff_bootstrap.csv").read_text().splitlines()[1].split(",")
        assert float(row[3]) == 1.0  # accuracy mean diff

    def test_cli_matches_library_bootstrap(self, tmp_path):
        rng = np.random.default_rng(0)
        y = rng.integers(0, 3, 40)
        a = rng.integers(0, 3, 40)
        b = rng.integers(0, 3, 40)
        for name, vec in (("labels", y), ("a", a), ("b", b)):
            (tmp_path / f"{name}.csv").write_text("\n".join(map(str, vec)) + "\n")
        rc = main(["compare", f"a={tmp_path/'a.csv'}", f"b={tmp_path/'b.csv'}",
                   "--labels", str(tmp_path / "labels.csv"),
                   "--iterations", "300", "--seed", "17",
                   "--out", str(tmp_path / "out")])
        assert rc == 0
        lib = bootstrap_diff(y, a, b, "accuracy", 300, seed=17)
        row = (tmp_path / "out" / "diff_bootstrap.csv").read_text().splitlines()[1].split(",")
        assert float(row[3]) == lib.mean_diff
        assert float(row[4]) == lib.ci95[0] and float(row[5]) == lib.ci95[1]

    def test_ablate_subcommand(self, tmp_path):
        y = [0, 1, 2, 0, 1, 2]
        (tmp_path / "labels.csv").write_text("\n".join(map(str, y)) + "\n")
        (tmp_path / "p1.csv").write_text("\n".join(map(str, y)) + "\n")
        (tmp_path / "p2.csv").write_text("\n".join(str((v + 1) % 3) for v in y) + "\n")
        rc = main(["ablate", f"m1={tmp_path/'p1.csv'}", f"m2={tmp_path/'p2.csv'}",
                   "--labels", str(tmp_path / "labels.csv"),
                   "--iterations", "200", "--out", str(tmp_path / "abl")])
        assert rc == 0
        table = (tmp_path / "abl" / "ablation.csv").read_text().splitlines()
        assert table[1].startswith("m1,1.0")

    def test_complement_subcommand(self, tmp_path):
        rng = np.random.default_rng(1)
        n = 300

        def write_matrix(name, data):
            path = tmp_path / f"{name}.csv"
            lines = [",".join(f"f{i}" for i in range(data.shape[1]))]
            lines += [",".join(repr(float(v)) for v in row) for row in data]
            path.write_text("\n".join(lines) + "\n")
            return path

        latent = rng.standard_normal(n)
        a = rng.standard_normal((n, 3)) * 0.5
        a[:, 0] += latent
        b = rng.standard_normal((n, 3))
        pa = write_matrix("a", a)
        pb = write_matrix("b", b)
        out = tmp_path / "comp.json"
        rc = main(["complement", f"A={pa}", f"B={pb}", "--bins", "8",
                   "--out", str(out)])
        assert rc == 0
        doc = json.loads(out.read_text())
        assert doc["pairs"][0]["domains"] == ["A", "B"]

    def test_train_subcommand(self, tmp_path):
        cfg = dict(TINY)
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps(cfg))
        out = tmp_path / "enc.weights"
        rc = main(["train", "--config", str(cfg_path), "--model", "cnn1d",
                   "--out", str(out)])
        assert rc == 0
        assert out.exists()

    def test_fuse_subcommand(self, tmp_path):
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps(TINY))
        rc = main(["pipeline", "--config", str(cfg_path), "--out", str(tmp_path / "run"),
                   "--no-figures"])
        assert rc == 0
        rc = main(["fuse", str(tmp_path / "run"), "--config", str(cfg_path),
                   "--out", str(tmp_path / "fused.weights")])
        assert rc == 0
        assert (tmp_path / "fused.weights").exists()

    def test_features_subcommand(self, tmp_path):
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps(TINY))
        rc = main(["features", "--config", str(cfg_path), "--out", str(tmp_path / "feats"),
                   "--n-scalograms", "2"])
        assert rc == 0
        names = {p.name for p in (tmp_path / "feats").iterdir()}
        assert {"time_view.csv", "frequency_view.csv", "time_features.csv",
                "scalogram_000.csv", "scalogram_000.pgm"} <= names

    def test_exit_codes(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text('{"bogus": 1}')
        assert main(["pipeline", "--config", str(bad), "--out", str(tmp_path / "x")]) == 2
        missing = tmp_path / "missing.json"
        assert main(["pipeline", "--config", str(missing), "--out", str(tmp_path / "x")]) == 2
        dir_cfg = tmp_path / "dir.json"
        dir_cfg.write_text(json.dumps({"data": {"source": "directory",
                                                "directory": str(tmp_path / "nodata")}}))
        assert main(["pipeline", "--config", str(dir_cfg), "--out", str(tmp_path / "x")]) == 3
