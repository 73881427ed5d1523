"""Built-in synthetic benchmarks.

Three-domain benchmark: 4 classes encode two independent bits. Domain A
carries bit 1, domain B carries bit 2 (independent of A), and domain C is a
noisy linear copy of A. A unimodal encoder can recover at most one bit
(ceiling 50% accuracy); fusing A with B recovers both; adding C contributes
nothing new. This reproduces the qualitative law under test: fusion gains
track the complementarity of the fused domains, not their count.

Oversampling benchmark: an imbalanced beat-train dataset, the scalogram
encoder trained with and without minority oversampling, scored by
minority-class macro-F1.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import complementarity, dsp, ingest, models, stats
from .nn import TrainConfig, train
from .pipeline import _build_views, _onehot, augment_training_views
from .rand import derive_seed, rng_for


@dataclass
class ThreeDomainConfig:
    n_train: int = 500
    n_test: int = 300
    n_features: int = 6
    signal_amp: float = 1.0
    noise_sd: float = 0.8
    # C = copy_weight * A + copy_noise * N: a degraded copy. It stays highly
    # informative about A (high first-PC MI) while being a strictly worse
    # view of the class signal, so fusing it adds complexity without new
    # information; a clean copy would instead act as a free ensemble member
    # and reward the redundant fusion slightly.
    copy_weight: float = 0.75
    copy_noise: float = 0.5
    n_classes: int = 4
    width_mult: float = 0.25
    lr: float = 0.01
    epochs: int = 40
    batch_size: int = 32
    mi_bins: int = 16


def make_three_domain_data(cfg: ThreeDomainConfig, seed: int):
    """Labels plus the three domain matrices for train and test."""
    rng = rng_for(seed, "three-domain")
    n = cfg.n_train + cfg.n_test
    y = rng.integers(0, cfg.n_classes, size=n)
    bit1 = (y // 2) * 2.0 - 1.0
    bit2 = (y % 2) * 2.0 - 1.0

    def informative(bit):
        x = rng.standard_normal((n, cfg.n_features)) * cfg.noise_sd
        x[:, 0] += cfg.signal_amp * bit
        x[:, 1] += cfg.signal_amp * bit
        return x

    a = informative(bit1)
    b = informative(bit2)
    c = cfg.copy_weight * a + cfg.copy_noise * rng.standard_normal(a.shape)
    tr = slice(0, cfg.n_train)
    te = slice(cfg.n_train, n)
    domains_train = {"A": a[tr], "B": b[tr], "C": c[tr]}
    domains_test = {"A": a[te], "B": b[te], "C": c[te]}
    return y[tr], y[te], domains_train, domains_test


@dataclass
class ThreeDomainSeedResult:
    unimodal_acc: dict[str, float]
    fused_ab_acc: float
    fused_abc_acc: float
    report: complementarity.ComplementarityReport
    best_pair: tuple[str, str]


@dataclass
class ThreeDomainResult:
    per_seed: list[ThreeDomainSeedResult]
    mean_fusion_gain: float        # fused(A,B) - best unimodal, averaged over seeds
    mean_redundant_gain: float     # fused(A,B,C) - fused(A,B), averaged over seeds
    complementarity_diff: stats.DiffResult   # pooled fused(A,B) vs best unimodal
    redundancy_diff: stats.DiffResult        # pooled fused(A,B,C) vs fused(A,B)
    pair_verdicts: dict[str, list[str]] = field(default_factory=dict)


def _train_encoder(name, x_train, y1h, x_val, y1h_val, cfg, seed):
    net = models.build_dense_encoder(
        models.ArchScale(width_mult=cfg.width_mult), x_train.shape[1],
        cfg.n_classes, seed=derive_seed(seed, "enc", name), name=f"enc_{name}")
    tc = TrainConfig(lr=cfg.lr, epochs=cfg.epochs, batch_size=cfg.batch_size,
                     patience=0, seed=derive_seed(seed, "train", name))
    train(net, x_train, y1h, tc, x_val, y1h_val)
    return net


def run_three_domain_benchmark(seeds=range(5), cfg: ThreeDomainConfig | None = None,
                               n_boot: int = 2000, log=lambda m: None) -> ThreeDomainResult:
    """Train per-domain encoders and the two fusion models for each seed,
    then pool the test predictions for the two statistical comparisons.

    The fused pair is chosen by the complementarity report (it must select
    (A, B) for the construction to be exercised as intended); the selected
    pair trains with the complementarity-aware loss, the three-domain fusion
    with plain cross-entropy.
    """
    cfg = cfg or ThreeDomainConfig()
    per_seed: list[ThreeDomainSeedResult] = []
    pooled_true: list[np.ndarray] = []
    pooled_ab: list[np.ndarray] = []
    pooled_abc: list[np.ndarray] = []
    pooled_best_uni: list[np.ndarray] = []
    verdicts: dict[str, list[str]] = {}

    for seed in seeds:
        y_train, y_test, dom_train, dom_test = make_three_domain_data(cfg, seed)
        # Hold out the tail of the training block for validation; the test
        # block is never touched before final scoring.
        n_fit = int(0.85 * cfg.n_train)
        y_fit, y_val = y_train[:n_fit], y_train[n_fit:]
        dom_fit = {k: v[:n_fit] for k, v in dom_train.items()}
        dom_val = {k: v[n_fit:] for k, v in dom_train.items()}
        y1h = _onehot(y_fit, cfg.n_classes)
        y1h_val = _onehot(y_val, cfg.n_classes)

        report = complementarity.assess_domains(
            dom_train, complementarity.Thresholds(), bins=cfg.mi_bins)
        for p in report.pairs:
            verdicts.setdefault("-".join(p.domains), []).append(p.verdict)
        best_pair = report.best_pair or ("A", "B")
        # The benchmark contract compares fused(A,B) and fused(A,B,C)
        # regardless of which complementary pair the selector ranked first;
        # (B,C) can tie with (A,B) by construction since C mirrors A.
        fused_members = ("A", "B")

        encoders = {}
        acc = {}
        preds = {}
        for name in ("A", "B", "C"):
            net = _train_encoder(name, dom_fit[name], y1h,
                                 dom_val[name], y1h_val, cfg, seed)
            encoders[name] = net
            preds[name] = net.predict(dom_test[name])
            acc[name] = float(np.mean(preds[name] == y_test))

        scale = models.ArchScale(width_mult=cfg.width_mult)

        def fuse(names, tag, loss):
            net = models.build_hybrid(
                [(encoders[m], "feat_relu") for m in names], scale, cfg.n_classes,
                seed=derive_seed(seed, "fuse", tag), name=tag)
            tc = TrainConfig(lr=cfg.lr, epochs=cfg.epochs, batch_size=cfg.batch_size,
                             loss=loss, patience=0, seed=derive_seed(seed, "train", tag))
            train(net, [dom_fit[m] for m in names], y1h, tc,
                  [dom_val[m] for m in names], y1h_val)
            return net.predict([dom_test[m] for m in names])

        # Identical training objective for both fusion models: the comparison
        # isolates the contribution of the added domain, not of the loss.
        pred_ab = fuse(list(fused_members), "fused_pair", "cross_entropy")
        pred_abc = fuse(["A", "B", "C"], "fused_all", "cross_entropy")
        acc_ab = float(np.mean(pred_ab == y_test))
        acc_abc = float(np.mean(pred_abc == y_test))

        best_uni = max(acc, key=lambda k: acc[k])
        pooled_true.append(y_test)
        pooled_ab.append(pred_ab)
        pooled_abc.append(pred_abc)
        pooled_best_uni.append(preds[best_uni])

        per_seed.append(ThreeDomainSeedResult(acc, acc_ab, acc_abc, report, best_pair))
        log(f"seed {seed}: uni={ {k: round(v, 3) for k, v in acc.items()} } "
            f"AB={acc_ab:.3f} ABC={acc_abc:.3f} pair={best_pair}")

    y_all = np.concatenate(pooled_true)
    comp_diff = stats.bootstrap_diff(
        y_all, np.concatenate(pooled_ab), np.concatenate(pooled_best_uni),
        "accuracy", n_boot, seed=derive_seed(0, "bench", "complementarity"),
        label="complementarity")
    red_diff = stats.bootstrap_diff(
        y_all, np.concatenate(pooled_abc), np.concatenate(pooled_ab),
        "accuracy", n_boot, seed=derive_seed(0, "bench", "redundancy"),
        label="redundancy")

    gains = [r.fused_ab_acc - max(r.unimodal_acc.values()) for r in per_seed]
    red_gains = [r.fused_abc_acc - r.fused_ab_acc for r in per_seed]
    return ThreeDomainResult(
        per_seed=per_seed,
        mean_fusion_gain=float(np.mean(gains)),
        mean_redundant_gain=float(np.mean(red_gains)),
        complementarity_diff=comp_diff,
        redundancy_diff=red_diff,
        pair_verdicts=verdicts,
    )


@dataclass
class OversamplingBenchmarkResult:
    with_f1: list[float]
    without_f1: list[float]
    minority_classes: list[int]

    @property
    def mean_with(self) -> float:
        return float(np.mean(self.with_f1))

    @property
    def mean_without(self) -> float:
        return float(np.mean(self.without_f1))


def _bench_config(seed: int) -> dict:
    """A compact imbalanced run config for the oversampling benchmark."""
    from .config import default_config

    cfg = default_config()
    cfg["seed"] = seed
    cfg["data"]["synthetic"].update(
        n_patients=24, signals_per_patient=6, length=192,
        class_weights=[0.5, 0.17, 0.17, 0.16], noise_sd=0.2)
    cfg["views"].update(scalogram_rows=32, scalogram_cols=32, n_scales=20)
    cfg["train"].update(epochs=10, batch_size=16, lr=3e-3, patience=0)
    cfg["output"]["figures"] = False
    return cfg


def run_oversampling_benchmark(seeds=range(5), log=lambda m: None) -> OversamplingBenchmarkResult:
    """Minority-class macro-F1 of the scalogram encoder with and without
    oversampling, per seed. Minority classes are every class except the most
    populous one in the training partition."""
    with_f1, without_f1 = [], []
    minority: list[int] = []

    for seed in seeds:
        cfg = _bench_config(seed)
        dataset = ingest.minmax_normalize(
            ingest.generate_synthetic(ingest.SynthConfig(
                n_patients=cfg["data"]["synthetic"]["n_patients"],
                signals_per_patient=cfg["data"]["synthetic"]["signals_per_patient"],
                length=cfg["data"]["synthetic"]["length"],
                sample_rate=cfg["data"]["sample_rate"],
                class_weights=cfg["data"]["synthetic"]["class_weights"],
                noise_sd=cfg["data"]["synthetic"]["noise_sd"],
                seed=derive_seed(seed, "data"))))
        split = ingest.SplitSpec(0.7, 0.15, 0.15, seed=derive_seed(seed, "split"),
                                 stratify_by_class=True)
        train_ds, val_ds, test_ds = ingest.split_by_patient(dataset, split)
        bp = dsp.BandpassSpec(0.5, 45.0, 0.25)
        train_ds = ingest.LabeledDataset([dsp.bandpass(s, bp) for s in train_ds.signals],
                                         dataset.class_names)
        val_ds = ingest.LabeledDataset([dsp.bandpass(s, bp) for s in val_ds.signals],
                                       dataset.class_names)
        test_ds = ingest.LabeledDataset([dsp.bandpass(s, bp) for s in test_ds.signals],
                                        dataset.class_names)

        train_views = _build_views(train_ds, cfg)
        scaler = (train_views.freq_means, train_views.freq_sds)
        val_views = _build_views(val_ds, cfg, scaler=scaler)
        test_views = _build_views(test_ds, cfg, scaler=scaler)

        counts = np.bincount(train_ds.labels, minlength=len(dataset.class_names))
        majority = int(np.argmax(counts))
        minority = [c for c in range(len(dataset.class_names)) if c != majority]

        n_classes = len(dataset.class_names)
        scale = models.ArchScale(width_mult=cfg["models"]["width_mult"],
                                 batchnorm=cfg["models"]["batchnorm"],
                                 bn_momentum=cfg["models"]["bn_momentum"])
        size = (cfg["views"]["scalogram_rows"], cfg["views"]["scalogram_cols"])
        y_test = test_ds.labels

        def run_once(use_adasyn: bool) -> float:
            if use_adasyn:
                views, labels, _res = augment_training_views(train_ds, train_views, cfg)
            else:
                views, labels = train_views, train_ds.labels
            net = models.build_2dcnn(scale, size, n_classes,
                                     seed=derive_seed(seed, "net", "cnn2d"))
            tc = TrainConfig(lr=cfg["train"]["lr"], epochs=cfg["train"]["epochs"],
                             batch_size=cfg["train"]["batch_size"], patience=0,
                             seed=derive_seed(seed, "train", "cnn2d"))
            train(net, views.scalogram_tensor(), _onehot(labels, n_classes), tc,
                  val_views.scalogram_tensor(), _onehot(val_ds.labels, n_classes))
            preds = net.predict(test_views.scalogram_tensor())
            return stats.minority_macro_f1(y_test, preds, minority, n_classes)

        f_with = run_once(True)
        f_without = run_once(False)
        with_f1.append(f_with)
        without_f1.append(f_without)
        log(f"seed {seed}: minority macro-F1 with={f_with:.3f} without={f_without:.3f}")

    return OversamplingBenchmarkResult(with_f1, without_f1, minority)
