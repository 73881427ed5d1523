"""Command-line interface: thin wrappers over the library operations.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric
failure (non-finite values during training/analysis), 1 anything else.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import complementarity, dsp, ingest, models, stats
from .config import load_config, resolve_config
from .errors import (
    ConfigError,
    DegenerateInput,
    InvalidInput,
    NumericError,
    PipelineError,
    SigfuseError,
)
from .nn import load_net, save_net, train
from .pipeline import ALL_MODELS, UNIMODAL, load_or_generate, run_pipeline
from .rand import derive_seed

EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


def _log(msg: str) -> None:
    print(msg, flush=True)


def _load_cfg(args) -> dict:
    cfg = load_config(args.config) if args.config else resolve_config({})
    if getattr(args, "seed", None) is not None:
        cfg["seed"] = args.seed
    if getattr(args, "skip_adasyn", False):
        cfg["adasyn"]["enabled"] = False
    if getattr(args, "no_figures", False):
        cfg["output"]["figures"] = False
    if getattr(args, "threads", None) is not None:
        cfg["threads"] = args.threads
        cfg = resolve_config(cfg)
    return cfg


def _run_dir(args, cfg) -> Path:
    if args.out:
        return Path(args.out)
    stamp = time.strftime("%Y%m%d-%H%M%S")
    return Path("runs") / f"run-s{cfg['seed']}-{stamp}"


def cmd_gen_data(args) -> int:
    cfg = _load_cfg(args)
    dataset = load_or_generate(cfg)
    manifest = ingest.save_dataset(dataset, args.out)
    _log(f"wrote {manifest['n_signals']} signals over {len(manifest['counts'])} classes to {args.out}")
    return 0


def cmd_pipeline(args) -> int:
    cfg = _load_cfg(args)
    out_dir = _run_dir(args, cfg)
    result = run_pipeline(cfg, out_dir, log=_log)
    _log(f"run directory: {result.out_dir}")
    for name in ALL_MODELS:
        _log(f"  {name}: test accuracy {result.test_metrics[name].accuracy:.3f}")
    return 0


def cmd_train(args) -> int:
    cfg = _load_cfg(args)
    if args.model not in UNIMODAL:
        raise ConfigError(f"--model must be one of {UNIMODAL}")
    from .pipeline import _build_views, _model_inputs, _onehot, _train_config

    dataset = ingest.minmax_normalize(load_or_generate(cfg))
    split = ingest.SplitSpec(cfg["split"]["train"], cfg["split"]["val"], cfg["split"]["test"],
                             seed=derive_seed(cfg["seed"], "split"),
                             group_by_patient=cfg["split"]["group_by_patient"])
    train_ds, val_ds, _ = ingest.split_by_patient(dataset, split)
    if cfg["preprocess"]["bandpass"]["enabled"]:
        bp = dsp.BandpassSpec(cfg["preprocess"]["bandpass"]["low_hz"],
                              cfg["preprocess"]["bandpass"]["high_hz"],
                              cfg["preprocess"]["bandpass"]["transition_hz"])
        train_ds = ingest.LabeledDataset([dsp.bandpass(s, bp) for s in train_ds.signals],
                                         dataset.class_names)
        val_ds = ingest.LabeledDataset([dsp.bandpass(s, bp) for s in val_ds.signals],
                                       dataset.class_names)
    train_views = _build_views(train_ds, cfg)
    val_views = _build_views(val_ds, cfg, scaler=(train_views.freq_means, train_views.freq_sds))

    n_classes = len(dataset.class_names)
    scale = models.ArchScale(width_mult=cfg["models"]["width_mult"],
                             heads=cfg["models"]["heads"], key_dim=cfg["models"]["key_dim"])
    if args.model == "cnn1d":
        net = models.build_1dcnn(scale, train_views.time.d, n_classes,
                                 seed=derive_seed(cfg["seed"], "net", "cnn1d"))
    elif args.model == "cnn2d":
        net = models.build_2dcnn(scale, (cfg["views"]["scalogram_rows"],
                                         cfg["views"]["scalogram_cols"]), n_classes,
                                 seed=derive_seed(cfg["seed"], "net", "cnn2d"))
    else:
        net = models.build_cnn_transformer(scale, train_views.frequency.d, n_classes,
                                           seed=derive_seed(cfg["seed"], "net", "transformer"))
    hist = train(net, _model_inputs(args.model, train_views),
                 _onehot(train_ds.labels, n_classes),
                 _train_config(cfg, args.model, cfg["seed"]),
                 _model_inputs(args.model, val_views), _onehot(val_ds.labels, n_classes))
    out = Path(args.out or f"{args.model}.weights")
    save_net(net, out)
    _log(f"best val accuracy {max(hist.val_acc):.3f} over {len(hist.val_acc)} epochs; weights -> {out}")
    return 0


def cmd_features(args) -> int:
    cfg = _load_cfg(args)
    from .pipeline import _build_views

    dataset = ingest.minmax_normalize(load_or_generate(cfg))
    views = _build_views(dataset, cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    dsp.feature_matrix_to_csv(views.time, out / "time_view.csv")
    dsp.feature_matrix_to_csv(views.frequency, out / "frequency_view.csv")

    window = args.window or max(8, views.time.d // 4)
    hop = args.hop or window
    rows = np.stack([dsp.time_features(s, window, hop) for s in dataset.signals])
    n_windows = rows.shape[1] // len(dsp.TIME_FEATURE_NAMES)
    names = [f"w{w}_{f}" for w in range(n_windows) for f in dsp.TIME_FEATURE_NAMES]
    dsp.feature_matrix_to_csv(dsp.FeatureMatrix(rows, dsp.TIME, names),
                              out / "time_features.csv")

    for i in range(min(args.n_scalograms, len(views.scalograms))):
        dsp.scalogram_to_csv(views.scalograms[i], out / f"scalogram_{i:03d}.csv")
        from .imageops import write_pgm
        write_pgm(out / f"scalogram_{i:03d}.pgm", views.scalograms[i].power * 255.0)
    _log(f"feature exports in {out}")
    return 0


def _read_matrix_csv(path) -> np.ndarray:
    rows = []
    with open(path) as fh:
        header = fh.readline()
        for line in fh:
            if line.strip():
                rows.append([float(v) for v in line.strip().split(",")])
    if not rows:
        raise InvalidInput(f"{path}: empty feature matrix")
    return np.asarray(rows)


def cmd_complement(args) -> int:
    cfg = _load_cfg(args)
    domains = {}
    for spec in args.features:
        if "=" not in spec:
            raise ConfigError("features must be NAME=path.csv")
        name, path = spec.split("=", 1)
        domains[name] = _read_matrix_csv(path)
    th = complementarity.Thresholds(**cfg["thresholds"])
    report = complementarity.assess_domains(domains, th, bins=args.bins)
    text = complementarity.report_to_json(report)
    if args.out:
        Path(args.out).write_text(text + "\n")
        _log(f"report -> {args.out}")
    else:
        _log(text)
    return 0


def cmd_fuse(args) -> int:
    cfg = _load_cfg(args)
    run_dir = Path(args.run_dir)
    report = json.loads((run_dir / "complementarity.json").read_text())
    best = report.get("best_pair")
    if not best:
        raise InvalidInput(f"{run_dir}: no best pair recorded")
    _log(f"selected pair: {best} (fallback={report.get('fallback', False)})")
    from .pipeline import DOMAIN_MODELS

    branch_names = [DOMAIN_MODELS[d] for d in best]
    nets = {name: load_net(run_dir / f"{name}.weights") for name in branch_names}
    scale = models.ArchScale(width_mult=cfg["models"]["width_mult"],
                             heads=cfg["models"]["heads"], key_dim=cfg["models"]["key_dim"])
    hybrid = models.build_hybrid(
        [(nets[m], models.default_hybrid_tap(nets[m])) for m in branch_names],
        scale, args.n_classes, seed=derive_seed(cfg["seed"], "net", "fuse"),
        name="hybrid1")
    out = Path(args.out or run_dir / "hybrid1_untrained.weights")
    save_net(hybrid, out)
    _log(f"assembled hybrid ({'+'.join(branch_names)}); weights -> {out}")
    return 0


def _read_labels_csv(path) -> np.ndarray:
    values = [int(float(line.strip().split(",")[-1]))
              for line in Path(path).read_text().splitlines() if line.strip()]
    return np.asarray(values, dtype=int)


def cmd_compare(args) -> int:
    y_true = _read_labels_csv(args.labels)
    preds = {}
    for spec in args.predictions:
        if "=" not in spec:
            raise ConfigError("predictions must be NAME=path.csv")
        name, path = spec.split("=", 1)
        preds[name] = _read_labels_csv(path)
        if preds[name].size != y_true.size:
            raise InvalidInput(f"{path}: length {preds[name].size} != labels {y_true.size}")
    names = list(preds)
    if len(names) != 2:
        raise ConfigError("compare expects exactly two NAME=path.csv predictions")
    a, b = names
    boot = [stats.bootstrap_diff(y_true, preds[a], preds[b], m, args.iterations,
                                 args.seed, label=args.label)
            for m in stats.DEFAULT_METRICS]
    bayes = stats.bayes_compare(y_true, preds[a], preds[b], stats.DEFAULT_METRICS,
                                args.iterations, args.seed, label=args.label)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    comp = f"{a}_vs_{b}"
    (out / "diff_bootstrap.csv").write_text(stats.diff_table_csv(boot, comp))
    (out / "diff_bayes.csv").write_text(stats.diff_table_csv(bayes, comp))
    (out / "diff_samples.json").write_text(stats.diff_samples_json({comp: bayes}) + "\n")
    for r in boot:
        _log(f"{r.metric}: mean diff {r.mean_diff:+.4f} CI [{r.ci95[0]:+.4f}, {r.ci95[1]:+.4f}] "
             f"p_le0={r.p_le0:.3f} P(diff>0)={r.p_gt0:.3f}")
    _log(f"tables -> {out}")
    return 0


def cmd_ablate(args) -> int:
    y_true = _read_labels_csv(args.labels)
    preds = {}
    for spec in args.predictions:
        if "=" not in spec:
            raise ConfigError("predictions must be NAME=path.csv")
        name, path = spec.split("=", 1)
        preds[name] = _read_labels_csv(path)
    result = stats.run_ablation(preds, y_true, pairs=[], n_boot=args.iterations,
                                seed=args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "ablation.csv").write_text(result.table_csv())
    (out / "ablation.json").write_text(json.dumps(result.as_dict(), indent=2, sort_keys=True) + "\n")
    _log(result.table_csv().strip())
    return 0


def cmd_report(args) -> int:
    from .report import render_run_report

    written = render_run_report(args.run_dir, svg=args.svg)
    for path in written:
        _log(f"wrote {path}")
    if not written:
        _log("no renderable artifacts found")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sigfuse",
        description="Complementarity-guided multimodal fusion for 1D biomedical signals",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, out_required=False, out_default=None):
        p.add_argument("--config", help="JSON run configuration")
        p.add_argument("--seed", type=int, default=None, help="override config seed")
        if out_required:
            p.add_argument("--out", required=True, help="output directory")
        else:
            p.add_argument("--out", default=out_default, help="output path")

    p = sub.add_parser("gen-data", help="write a synthetic dataset to disk")
    add_common(p, out_required=True)
    p.set_defaults(fn=cmd_gen_data)

    p = sub.add_parser("pipeline", help="run the full experiment pipeline")
    add_common(p)
    p.add_argument("--skip-adasyn", action="store_true", help="disable minority oversampling")
    p.add_argument("--no-figures", action="store_true", help="skip figure rendering")
    p.add_argument("--threads", type=int, default=None,
                   help="worker threads (only 1 supported; runs stay bit-reproducible)")
    p.set_defaults(fn=cmd_pipeline)

    p = sub.add_parser("train", help="train one unimodal encoder")
    add_common(p)
    p.add_argument("--model", required=True, choices=list(UNIMODAL))
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("features", help="export domain feature matrices as CSV")
    add_common(p, out_required=True)
    p.add_argument("--window", type=int, default=None, help="time-feature window length")
    p.add_argument("--hop", type=int, default=None, help="time-feature hop")
    p.add_argument("--n-scalograms", type=int, default=4, help="scalograms to export")
    p.set_defaults(fn=cmd_features)

    p = sub.add_parser("complement", help="complementarity report from feature CSVs")
    add_common(p)
    p.add_argument("features", nargs="+", help="NAME=path.csv per domain")
    p.add_argument("--bins", type=int, default=16)
    p.set_defaults(fn=cmd_complement)

    p = sub.add_parser("fuse", help="assemble a fusion model from a run directory")
    add_common(p)
    p.add_argument("run_dir", help="pipeline run directory with weights + report")
    p.add_argument("--n-classes", type=int, default=4)
    p.set_defaults(fn=cmd_fuse)

    p = sub.add_parser("compare", help="bootstrap + Bayesian comparison of two prediction files")
    p.add_argument("predictions", nargs="+", help="NAME=path.csv (exactly two)")
    p.add_argument("--labels", required=True, help="ground-truth labels CSV")
    p.add_argument("--iterations", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--label", default="custom")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(fn=cmd_compare)

    p = sub.add_parser("ablate", help="metric table over prediction files")
    p.add_argument("predictions", nargs="+", help="NAME=path.csv per model")
    p.add_argument("--labels", required=True)
    p.add_argument("--iterations", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_ablate)

    p = sub.add_parser("report", help="render figures for a run directory")
    p.add_argument("run_dir")
    p.add_argument("--svg", action="store_true", help="also write SVG (dates suppressed)")
    p.set_defaults(fn=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (InvalidInput, DegenerateInput, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except PipelineError as exc:
        cause = exc.__cause__
        if isinstance(cause, NumericError):
            print(f"numeric failure: {exc}", file=sys.stderr)
            return EXIT_NUMERIC
        if isinstance(cause, (InvalidInput, DegenerateInput, FileNotFoundError)):
            print(f"data error: {exc}", file=sys.stderr)
            return EXIT_DATA
        print(f"pipeline error: {exc}", file=sys.stderr)
        return 1
    except SigfuseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
