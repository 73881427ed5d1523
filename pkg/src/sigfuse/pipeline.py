"""End-to-end run orchestration: data to ablation tables.

Stage order: ingest/split -> band-pass -> domain views -> oversampling of the
training partition only (views regenerated for synthetic signals) -> three
unimodal encoders -> deep features -> complementarity report and pair
selection -> two fusion models -> held-out evaluation -> bootstrap/Bayesian
comparison -> ablation. Every artifact lands in the run directory with a
content hash recorded in the run manifest; nothing embeds timestamps, so a
rerun with the same config is byte-identical.
"""

from __future__ import annotations

import hashlib
import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import balance, complementarity, dsp, ingest, models, stats
from .dsp import BandpassSpec, DomainViewConfig, DomainViews, FeatureMatrix
from .errors import PipelineError
from .nn import TrainConfig, save_net, train
from .rand import derive_seed

TIME, FREQUENCY, TIME_FREQUENCY = dsp.TIME, dsp.FREQUENCY, dsp.TIME_FREQUENCY

# Domain tag -> unimodal model name.
DOMAIN_MODELS = {TIME: "cnn1d", TIME_FREQUENCY: "cnn2d", FREQUENCY: "transformer"}
MODEL_DOMAINS = {v: k for k, v in DOMAIN_MODELS.items()}
UNIMODAL = ("cnn1d", "cnn2d", "transformer")
ALL_MODELS = UNIMODAL + ("hybrid1", "hybrid2")


@dataclass
class RunResult:
    out_dir: Path
    test_metrics: dict[str, stats.MetricSet]
    predictions: dict[str, np.ndarray]
    y_test: np.ndarray
    report: complementarity.ComplementarityReport
    fidelity: balance.FidelityReport | None
    histories: dict[str, dict]
    synth_counts: dict[int, int]
    artifacts: dict[str, str] = field(default_factory=dict)


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write(out_dir: Path, rel: str, text: str, artifacts: dict) -> Path:
    path = out_dir / rel
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    artifacts[rel] = _sha256(path)
    return path


class _Stage:
    """Context manager that renames any failure to its pipeline stage."""

    def __init__(self, name: str, log):
        self.name = name
        self.log = log

    def __enter__(self):
        self.log(f"[stage] {self.name}")
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc is not None and not isinstance(exc, PipelineError):
            raise PipelineError(self.name, f"{type(exc).__name__}: {exc}") from exc
        return False


def _model_inputs(name: str, views: DomainViews) -> np.ndarray:
    if name == "cnn1d":
        return views.time.data[..., None]
    if name == "cnn2d":
        return views.scalogram_tensor()
    if name == "transformer":
        return views.frequency.data[..., None]
    raise KeyError(name)


def _train_config(cfg: dict, model: str, seed: int) -> TrainConfig:
    base = {k: v for k, v in cfg["train"].items() if k != "overrides"}
    base.update(cfg["train"]["overrides"].get(model, {}))
    return TrainConfig(
        lr=base["lr"], epochs=base["epochs"], batch_size=base["batch_size"],
        loss=base["loss"], lambda_mi=base["lambda_mi"], lambda_ortho=base["lambda_ortho"],
        patience=base["patience"], seed=derive_seed(seed, "train", model),
    )


def _build_views(dataset: ingest.LabeledDataset, cfg: dict,
                 scaler=None) -> DomainViews:
    vc = DomainViewConfig(
        fft_bins=cfg["views"]["fft_bins"],
        n_scales=cfg["views"]["n_scales"],
        scalogram_size=(cfg["views"]["scalogram_rows"], cfg["views"]["scalogram_cols"]),
    )
    return dsp.build_domain_views(dataset, vc, freq_scaler=scaler)


def _bandpass_dataset(dataset: ingest.LabeledDataset, spec: BandpassSpec) -> ingest.LabeledDataset:
    return ingest.LabeledDataset(
        [dsp.bandpass(s, spec) for s in dataset.signals], list(dataset.class_names)
    )


def load_or_generate(cfg: dict) -> ingest.LabeledDataset:
    data_cfg = cfg["data"]
    if data_cfg["source"] == "synthetic":
        syn = data_cfg["synthetic"]
        synth_cfg = ingest.SynthConfig(
            n_patients=syn["n_patients"], signals_per_patient=syn["signals_per_patient"],
            length=syn["length"], sample_rate=data_cfg["sample_rate"],
            class_weights=syn["class_weights"], noise_sd=syn["noise_sd"],
            seed=derive_seed(cfg["seed"], "data"),
        )
        return ingest.generate_synthetic(synth_cfg)
    if data_cfg["source"] == "directory":
        return ingest.load_dataset(data_cfg["directory"],
                                   sample_rate=data_cfg["sample_rate"],
                                   image_target_len=data_cfg["image_target_len"])
    raise PipelineError("data", f"unknown source {data_cfg['source']!r}")


def augment_training_views(
    train_ds: ingest.LabeledDataset,
    train_views: DomainViews,
    cfg: dict,
) -> tuple[DomainViews, np.ndarray, balance.AdasynResult]:
    """Oversample the training signals and regenerate the other views for the
    synthetic rows so all three stay consistent."""
    ad_cfg = balance.AdasynConfig(k=cfg["adasyn"]["k"], beta=cfg["adasyn"]["beta"],
                                  seed=derive_seed(cfg["seed"], "adasyn"))
    result = balance.adasyn(train_views.time.data, train_ds.labels, ad_cfg)
    n_orig = len(train_ds)
    if result.synthetic_mask.sum() == 0:
        return train_views, result.labels, result

    fs = train_ds.signals[0].sample_rate
    synth_signals = [
        ingest.Signal1D(row, fs, int(lbl), patient_id="synthetic",
                        source_id=f"synthetic-{i:04d}")
        for i, (row, lbl) in enumerate(zip(result.features[n_orig:], result.labels[n_orig:]))
    ]
    synth_ds = ingest.LabeledDataset(synth_signals, list(train_ds.class_names))
    synth_views = _build_views(synth_ds, cfg,
                               scaler=(train_views.freq_means, train_views.freq_sds))
    merged = DomainViews(
        time=FeatureMatrix(result.features, TIME),
        frequency=FeatureMatrix(
            np.vstack([train_views.frequency.data, synth_views.frequency.data]),
            FREQUENCY, train_views.frequency.feature_names),
        scalograms=train_views.scalograms + synth_views.scalograms,
        freq_means=train_views.freq_means,
        freq_sds=train_views.freq_sds,
    )
    return merged, result.labels, result


def _onehot(labels: np.ndarray, n_classes: int) -> np.ndarray:
    out = np.zeros((labels.size, n_classes))
    out[np.arange(labels.size), labels] = 1.0
    return out


def _diff_csv(groups: list[tuple[str, list[stats.DiffResult]]]) -> str:
    lines = ["comparison,label,metric,mean_diff,ci_lo,ci_hi,p_le0,p_gt0"]
    for comparison, results in groups:
        for r in results:
            lines.append(
                f"{comparison},{r.label},{r.metric},{r.mean_diff!r},{r.ci95[0]!r},"
                f"{r.ci95[1]!r},{r.p_le0!r},{r.p_gt0!r}"
            )
    return "\n".join(lines) + "\n"


def run_pipeline(cfg: dict, out_dir, log=lambda msg: None) -> RunResult:
    """Execute the full run; see the module docstring for the stage list."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    artifacts: dict[str, str] = {}
    seed = cfg["seed"]
    n_classes = None

    _write(out_dir, "config.json", json.dumps(cfg, indent=2, sort_keys=True) + "\n", artifacts)

    with _Stage("data", log):
        dataset = load_or_generate(cfg)
        dataset = ingest.minmax_normalize(dataset)
        n_classes = len(dataset.class_names)

    with _Stage("split", log):
        split_spec = ingest.SplitSpec(
            cfg["split"]["train"], cfg["split"]["val"], cfg["split"]["test"],
            seed=derive_seed(seed, "split"),
            group_by_patient=cfg["split"]["group_by_patient"],
            stratify_by_class=cfg["split"]["stratify_by_class"],
        )
        train_ds, val_ds, test_ds = ingest.split_by_patient(dataset, split_spec)
        log(f"  split: {len(train_ds)}/{len(val_ds)}/{len(test_ds)} signals")

    with _Stage("bandpass", log):
        if cfg["preprocess"]["bandpass"]["enabled"]:
            bp = BandpassSpec(
                cfg["preprocess"]["bandpass"]["low_hz"],
                cfg["preprocess"]["bandpass"]["high_hz"],
                cfg["preprocess"]["bandpass"]["transition_hz"],
            )
            train_ds = _bandpass_dataset(train_ds, bp)
            val_ds = _bandpass_dataset(val_ds, bp)
            test_ds = _bandpass_dataset(test_ds, bp)

    with _Stage("views", log):
        train_views = _build_views(train_ds, cfg)
        scaler = (train_views.freq_means, train_views.freq_sds)
        val_views = _build_views(val_ds, cfg, scaler=scaler)
        test_views = _build_views(test_ds, cfg, scaler=scaler)

    with _Stage("adasyn", log):
        if cfg["adasyn"]["enabled"]:
            aug_views, train_labels, ad_result = augment_training_views(train_ds, train_views, cfg)
            log(f"  synthetic per class: {ad_result.synth_counts}")
            path = out_dir / "train_augmented.csv"
            balance.augmented_to_csv(ad_result, path)
            artifacts["train_augmented.csv"] = _sha256(path)
        else:
            aug_views, train_labels = train_views, train_ds.labels
            ad_result = balance.AdasynResult(
                train_views.time.data, train_ds.labels,
                {c: 0 for c in range(n_classes)},
                np.zeros(len(train_ds), dtype=bool))

    train_y = _onehot(train_labels, n_classes)
    val_y = _onehot(val_ds.labels, n_classes)
    y_test = test_ds.labels

    nets: dict[str, object] = {}
    histories: dict[str, dict] = {}
    with _Stage("train_unimodal", log):
        scale = models.ArchScale(
            width_mult=cfg["models"]["width_mult"], heads=cfg["models"]["heads"],
            key_dim=cfg["models"]["key_dim"], ff_dim=cfg["models"]["ff_dim"],
            fusion_dense=cfg["models"]["fusion_dense"],
            batchnorm=cfg["models"]["batchnorm"],
            bn_momentum=cfg["models"]["bn_momentum"],
        )
        builders = {
            "cnn1d": lambda: models.build_1dcnn(scale, aug_views.time.d, n_classes,
                                                seed=derive_seed(seed, "net", "cnn1d")),
            "cnn2d": lambda: models.build_2dcnn(
                scale, (cfg["views"]["scalogram_rows"], cfg["views"]["scalogram_cols"]),
                n_classes, seed=derive_seed(seed, "net", "cnn2d")),
            "transformer": lambda: models.build_cnn_transformer(
                scale, aug_views.frequency.d, n_classes,
                seed=derive_seed(seed, "net", "transformer")),
        }
        for name in UNIMODAL:
            net = builders[name]()
            tc = _train_config(cfg, name, seed)
            hist = train(net, _model_inputs(name, aug_views), train_y, tc,
                         _model_inputs(name, val_views), val_y)
            nets[name] = net
            histories[name] = hist.as_dict()
            log(f"  {name}: val_acc={max(hist.val_acc):.3f} epochs={len(hist.val_acc)}")

    with _Stage("fidelity", log):
        fid_report = None
        if ad_result.synthetic_mask.any():
            deep = models.extract_deep_features(nets["cnn2d"], aug_views.scalogram_tensor())
            signal_rep = balance.build_fidelity_report(
                aug_views.time.data, train_labels, ad_result.synthetic_mask,
                dataset.class_names, ad_result.synth_counts)
            flat_scal = np.stack([s.power.reshape(-1) for s in aug_views.scalograms])
            scal_rep = balance.build_fidelity_report(
                flat_scal, train_labels, ad_result.synthetic_mask,
                dataset.class_names, ad_result.synth_counts,
                fid_features=deep.matrix.data)
            fid_doc = {
                "signal_space": json.loads(balance.radar_export(signal_rep)),
                "scalogram_space": json.loads(balance.radar_export(scal_rep)),
                "deep_fid": scal_rep.fid,
            }
            _write(out_dir, "fidelity.json",
                   json.dumps(fid_doc, indent=2, sort_keys=True) + "\n", artifacts)
            fid_report = scal_rep

    with _Stage("deep_features", log):
        domain_feats = {
            MODEL_DOMAINS[name]: models.extract_deep_features(
                nets[name], _model_inputs(name, aug_views)).matrix
            for name in UNIMODAL
        }

    with _Stage("complementarity", log):
        th = complementarity.Thresholds(**cfg["thresholds"])
        n_rows = next(iter(domain_feats.values())).n
        bins = max(4, min(cfg["bootstrap"]["mi_bins"], n_rows // 8))
        report = complementarity.assess_domains(domain_feats, th, bins=bins)
        if report.best_pair is None:
            # No pair satisfies the predicates: fall back to the least
            # entangled pair so the fusion stage can still run, and flag it.
            best = min(report.pairs, key=lambda p: (p.mi + p.ortho, abs(p.corr), p.domains))
            report.best_pair = best.domains
            report.fallback = True
            log(f"  no complementary pair; falling back to {best.domains}")
        _write(out_dir, "complementarity.json",
               complementarity.report_to_json(report) + "\n", artifacts)
        _write(out_dir, "heatmap.csv", complementarity.heatmap_csv(report), artifacts)

    with _Stage("fusion", log):
        pair_models = [DOMAIN_MODELS[d] for d in report.best_pair]
        freeze = not cfg["models"]["finetune"]

        def hybrid(names, tag):
            branches = [(nets[m], models.default_hybrid_tap(nets[m])) for m in names]
            net = models.build_hybrid(branches, scale, n_classes,
                                      seed=derive_seed(seed, "net", tag), name=tag,
                                      freeze=freeze)
            tc = _train_config(cfg, tag, seed)
            hist = train(net,
                         [_model_inputs(m, aug_views) for m in names], train_y, tc,
                         [_model_inputs(m, val_views) for m in names], val_y)
            histories[tag] = hist.as_dict()
            log(f"  {tag}({'+'.join(names)}): val_acc={max(hist.val_acc):.3f}")
            return net, names

        nets["hybrid1"], hybrid1_members = hybrid(pair_models, "hybrid1")
        nets["hybrid2"], hybrid2_members = hybrid(list(UNIMODAL), "hybrid2")

    with _Stage("evaluate", log):
        predictions = {}
        for name in UNIMODAL:
            predictions[name] = nets[name].predict(_model_inputs(name, test_views))
        predictions["hybrid1"] = nets["hybrid1"].predict(
            [_model_inputs(m, test_views) for m in hybrid1_members])
        predictions["hybrid2"] = nets["hybrid2"].predict(
            [_model_inputs(m, test_views) for m in hybrid2_members])

        metrics = {}
        metrics_doc = {}
        for name in ALL_MODELS:
            cm, mset = stats.evaluate(y_test, predictions[name], dataset.class_names)
            metrics[name] = mset
            metrics_doc[name] = mset.as_dict()
            metrics_doc[name]["confusion"] = cm.counts.tolist()
        _write(out_dir, "metrics.json",
               json.dumps(metrics_doc, indent=2, sort_keys=True) + "\n", artifacts)

        lines = ["index,y_true," + ",".join(ALL_MODELS)]
        for i in range(y_test.size):
            lines.append(f"{i},{y_test[i]}," + ",".join(str(predictions[m][i]) for m in ALL_MODELS))
        _write(out_dir, "predictions.csv", "\n".join(lines) + "\n", artifacts)
        _write(out_dir, "labels.csv",
               "\n".join(str(v) for v in y_test) + "\n", artifacts)

    with _Stage("compare", log):
        n_boot = cfg["bootstrap"]["iterations"]
        comparisons = [
            ("hybrid1", "cnn2d", "complementarity"),
            ("hybrid2", "hybrid1", "redundancy"),
        ]
        boot_rows, bayes_rows, sample_groups = [], [], {}
        for a, b, tag in comparisons:
            boot = [stats.bootstrap_diff(y_test, predictions[a], predictions[b],
                                         metric, n_boot, derive_seed(seed, "boot", a, b),
                                         label=tag)
                    for metric in stats.DEFAULT_METRICS]
            bayes = stats.bayes_compare(y_test, predictions[a], predictions[b],
                                        stats.DEFAULT_METRICS, n_boot,
                                        derive_seed(seed, "boot", a, b), label=tag)
            boot_rows.append((f"{a}_vs_{b}", boot))
            bayes_rows.append((f"{a}_vs_{b}", bayes))
            sample_groups[f"{a}_vs_{b}"] = bayes
        _write(out_dir, "diff_bootstrap.csv", _diff_csv(boot_rows), artifacts)
        _write(out_dir, "diff_bayes.csv", _diff_csv(bayes_rows), artifacts)
        _write(out_dir, "diff_samples.json",
               stats.diff_samples_json(sample_groups) + "\n", artifacts)

    with _Stage("ablation", log):
        ablation = stats.run_ablation(
            predictions, y_test,
            pairs=[("hybrid1", "cnn2d", "complementarity"),
                   ("hybrid2", "hybrid1", "redundancy")],
            n_boot=cfg["bootstrap"]["iterations"], seed=derive_seed(seed, "ablation"))
        _write(out_dir, "ablation.csv", ablation.table_csv(), artifacts)
        _write(out_dir, "ablation.json",
               json.dumps(ablation.as_dict(), indent=2, sort_keys=True) + "\n", artifacts)

    with _Stage("persist", log):
        for name in ALL_MODELS:
            path = out_dir / f"{name}.weights"
            save_net(nets[name], path)
            artifacts[f"{name}.weights"] = _sha256(path)
        _write(out_dir, "histories.json",
               json.dumps(histories, indent=2, sort_keys=True) + "\n", artifacts)
        for name in ALL_MODELS:
            _write(out_dir, f"arch_{name}.json",
                   models.architecture_manifest(nets[name]) + "\n", artifacts)

    with _Stage("manifest", log):
        train_patients = sorted(set(train_ds.patient_ids))
        val_patients = sorted(set(val_ds.patient_ids))
        test_patients = sorted(set(test_ds.patient_ids))
        disjoint = (not set(train_patients) & set(val_patients)
                    and not set(train_patients) & set(test_patients)
                    and not set(val_patients) & set(test_patients))
        n_train_orig = len(train_ds)
        provenance_ok = all(i < n_train_orig and z < n_train_orig
                            for _c, i, z, _l in ad_result.provenance)
        manifest = {
            "patients": {"train": train_patients, "val": val_patients, "test": test_patients},
            "patient_disjoint": disjoint,
            "adasyn": {"synth_counts": {str(k): v for k, v in ad_result.synth_counts.items()},
                       "provenance_within_train": provenance_ok},
            "artifacts": artifacts,
        }
        path = out_dir / "run_manifest.json"
        path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")

    if cfg["output"]["figures"]:
        with _Stage("figures", log):
            from . import report as report_mod
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                report_mod.render_run_report(out_dir, svg=cfg["output"]["svg"])

    return RunResult(
        out_dir=out_dir, test_metrics=metrics, predictions=predictions,
        y_test=y_test, report=report, fidelity=fid_report, histories=histories,
        synth_counts=ad_result.synth_counts, artifacts=artifacts,
    )
