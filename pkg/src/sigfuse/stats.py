"""Classification metrics and resampling-based model comparison.

One resampling engine serves both analyses: metric differences over index
resamples drawn with replacement. The frequentist view reports the one-sided
proportions p(Delta <= 0) and p(Delta > 0) plus a percentile interval; the
Bayesian view reads the same distribution as a posterior, with P(Delta > 0)
as the headline probability. The two therefore agree exactly on the samples
for a given seed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInput
from .rand import rng_for


@dataclass
class ConfusionMatrix:
    counts: np.ndarray  # rows = true class, cols = predicted
    class_names: list[str]

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=int)
        c = len(self.class_names)
        if self.counts.shape != (c, c):
            raise InvalidInput(f"counts must be {c}x{c}")
        if np.any(self.counts < 0):
            raise InvalidInput("counts must be nonnegative")

    @property
    def total(self) -> int:
        return int(self.counts.sum())


@dataclass
class ClassMetrics:
    precision: float
    recall: float
    f1: float
    specificity: float
    support: int
    empty_denominator: bool = False  # any 0/0 resolved to 0


@dataclass
class MetricSet:
    accuracy: float
    per_class: list[ClassMetrics]
    macro_precision: float
    macro_recall: float
    macro_f1: float
    weighted_precision: float
    weighted_recall: float
    weighted_f1: float

    def as_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "macro_precision": self.macro_precision,
            "macro_recall": self.macro_recall,
            "macro_f1": self.macro_f1,
            "weighted_precision": self.weighted_precision,
            "weighted_recall": self.weighted_recall,
            "weighted_f1": self.weighted_f1,
            "per_class": [
                {"precision": m.precision, "recall": m.recall, "f1": m.f1,
                 "specificity": m.specificity, "support": m.support,
                 "empty_denominator": m.empty_denominator}
                for m in self.per_class
            ],
        }


def _confusion_cells(y_true, y_pred, n_classes):
    """(TP, FP, FN, TN) arrays per class via bincount on joint codes."""
    joint = np.bincount(y_true * n_classes + y_pred, minlength=n_classes * n_classes)
    cm = joint.reshape(n_classes, n_classes)
    tp = np.diag(cm).astype(float)
    fp = cm.sum(axis=0) - tp
    fn = cm.sum(axis=1) - tp
    tn = cm.sum() - tp - fp - fn
    return cm, tp, fp, fn, tn


def _safe_div(num, den):
    out = np.zeros_like(num, dtype=float)
    ok = den > 0
    out[ok] = num[ok] / den[ok]
    return out, ~ok


def evaluate(y_true, y_pred, class_names: list[str] | None = None):
    """Confusion matrix plus the full metric set.

    Per-class precision TP/(TP+FP), recall TP/(TP+FN), F1, specificity
    TN/(TN+FP); empty denominators resolve to 0 and are flagged. Weighted
    averages use class support, so weighted recall equals accuracy.
    """
    y_true = np.asarray(y_true, dtype=int)
    y_pred = np.asarray(y_pred, dtype=int)
    if y_true.shape != y_pred.shape or y_true.ndim != 1 or y_true.size == 0:
        raise InvalidInput("y_true and y_pred must be equal-length nonempty vectors")
    if class_names is None:
        n_classes = int(max(y_true.max(), y_pred.max())) + 1
        class_names = [f"class{i}" for i in range(n_classes)]
    n_classes = len(class_names)
    if y_true.max() >= n_classes or y_pred.max() >= n_classes or y_true.min() < 0 or y_pred.min() < 0:
        raise InvalidInput("labels out of range")

    cm, tp, fp, fn, tn = _confusion_cells(y_true, y_pred, n_classes)
    precision, p_flag = _safe_div(tp, tp + fp)
    recall, r_flag = _safe_div(tp, tp + fn)
    f1, f_flag = _safe_div(2 * precision * recall, precision + recall)
    specificity, s_flag = _safe_div(tn, tn + fp)
    support = cm.sum(axis=1)

    per_class = [
        ClassMetrics(float(precision[c]), float(recall[c]), float(f1[c]),
                     float(specificity[c]), int(support[c]),
                     bool(p_flag[c] or r_flag[c] or f_flag[c] or s_flag[c]))
        for c in range(n_classes)
    ]
    weights = support / support.sum()
    metrics = MetricSet(
        accuracy=float(tp.sum() / y_true.size),
        per_class=per_class,
        macro_precision=float(precision.mean()),
        macro_recall=float(recall.mean()),
        macro_f1=float(f1.mean()),
        weighted_precision=float(np.sum(weights * precision)),
        weighted_recall=float(np.sum(weights * recall)),
        weighted_f1=float(np.sum(weights * f1)),
    )
    return ConfusionMatrix(cm, class_names), metrics


# -- fast metric functions for resampling loops ------------------------------

def _accuracy_fn(y_true, y_pred, n_classes):
    return float(np.mean(y_true == y_pred))


def _prf(y_true, y_pred, n_classes):
    _cm, tp, fp, fn, _tn = _confusion_cells(y_true, y_pred, n_classes)
    precision, _ = _safe_div(tp, tp + fp)
    recall, _ = _safe_div(tp, tp + fn)
    f1, _ = _safe_div(2 * precision * recall, precision + recall)
    support = tp + fn
    return precision, recall, f1, support


def _weighted(metric_idx):
    def fn(y_true, y_pred, n_classes):
        precision, recall, f1, support = _prf(y_true, y_pred, n_classes)
        values = (precision, recall, f1)[metric_idx]
        total = support.sum()
        return float(np.sum(values * support) / total) if total else 0.0
    return fn


def _macro_f1(y_true, y_pred, n_classes):
    _p, _r, f1, _s = _prf(y_true, y_pred, n_classes)
    return float(f1.mean())


def minority_macro_f1(y_true, y_pred, minority_classes, n_classes=None):
    """Mean F1 over the given minority class ids."""
    n_classes = n_classes or int(max(np.max(y_true), np.max(y_pred))) + 1
    _p, _r, f1, _s = _prf(np.asarray(y_true, int), np.asarray(y_pred, int), n_classes)
    return float(np.mean([f1[c] for c in minority_classes]))


METRIC_FUNCS = {
    "accuracy": _accuracy_fn,
    "precision": _weighted(0),
    "recall": _weighted(1),
    "f1": _weighted(2),
    "macro_f1": _macro_f1,
}

DEFAULT_METRICS = ("accuracy", "precision", "recall", "f1")


@dataclass
class DiffResult:
    metric: str
    mean_diff: float
    ci95: tuple[float, float]
    p_le0: float  # proportion of resampled differences <= 0
    p_gt0: float  # proportion > 0; the posterior P(Delta > 0)
    samples: np.ndarray = field(repr=False, default=None)
    label: str = ""
    n_boot: int = 0
    seed: int = 0


def percentile_interval(samples: np.ndarray, lo: float = 2.5, hi: float = 97.5):
    """Linear-interpolated percentile interval."""
    return (float(np.percentile(samples, lo)), float(np.percentile(samples, hi)))


def resample_indices(n: int, n_boot: int, rng: np.random.Generator) -> np.ndarray:
    """(n_boot, n) index matrix drawn with replacement."""
    return rng.integers(0, n, size=(n_boot, n))


def bootstrap_diff(y_true, y_pred_a, y_pred_b, metric: str = "accuracy",
                   n_boot: int = 1000, seed: int = 0, label: str = "") -> DiffResult:
    """Distribution of metric(A) - metric(B) over index resamples.

    Deterministic given the seed; the RNG stream is derived from
    (seed, metric) so each metric's table is independently reproducible.
    """
    y_true = np.asarray(y_true, dtype=int)
    a = np.asarray(y_pred_a, dtype=int)
    b = np.asarray(y_pred_b, dtype=int)
    if not (y_true.shape == a.shape == b.shape) or y_true.ndim != 1:
        raise InvalidInput("prediction vectors must be aligned with y_true")
    if n_boot < 100:
        raise InvalidInput("need at least 100 bootstrap iterations")
    if metric not in METRIC_FUNCS:
        raise InvalidInput(f"unknown metric {metric!r}; choose from {sorted(METRIC_FUNCS)}")

    n = y_true.size
    n_classes = int(max(y_true.max(), a.max(), b.max())) + 1
    fn = METRIC_FUNCS[metric]
    rng = rng_for(seed, "bootstrap", metric)
    idx = resample_indices(n, n_boot, rng)
    deltas = np.empty(n_boot)
    for i in range(n_boot):
        rows = idx[i]
        yt = y_true[rows]
        deltas[i] = fn(yt, a[rows], n_classes) - fn(yt, b[rows], n_classes)

    lo, hi = percentile_interval(deltas)
    return DiffResult(
        metric=metric,
        mean_diff=float(deltas.mean()),
        ci95=(lo, hi),
        p_le0=float(np.mean(deltas <= 0)),
        p_gt0=float(np.mean(deltas > 0)),
        samples=deltas,
        label=label,
        n_boot=n_boot,
        seed=seed,
    )


def bayes_compare(y_true, y_pred_a, y_pred_b, metrics=DEFAULT_METRICS,
                  n_boot: int = 1000, seed: int = 0, label: str = "") -> list[DiffResult]:
    """Posterior summaries of the metric differences.

    Runs the same resampling engine as :func:`bootstrap_diff` (identical
    samples for a given seed); the credible interval is the 2.5/97.5
    percentile band and P(Delta > 0) the posterior exceedance probability.
    ``samples`` come back sorted for violin plotting.
    """
    results = []
    for metric in metrics:
        res = bootstrap_diff(y_true, y_pred_a, y_pred_b, metric, n_boot, seed, label)
        res.samples = np.sort(res.samples)
        results.append(res)
    return results


def diff_table_csv(results: list[DiffResult], comparison: str = "") -> str:
    lines = ["comparison,label,metric,mean_diff,ci_lo,ci_hi,p_le0,p_gt0"]
    for r in results:
        lines.append(
            f"{comparison},{r.label},{r.metric},{r.mean_diff!r},{r.ci95[0]!r},"
            f"{r.ci95[1]!r},{r.p_le0!r},{r.p_gt0!r}"
        )
    return "\n".join(lines) + "\n"


def diff_samples_json(groups: dict[str, list[DiffResult]]) -> str:
    """Violin/strip-plot data: per comparison, per metric, the Delta samples."""
    doc = {
        comp: {r.metric: [float(v) for v in r.samples] for r in results}
        for comp, results in groups.items()
    }
    return json.dumps(doc, indent=2, sort_keys=True)


@dataclass
class AblationRow:
    model: str
    metrics: MetricSet


@dataclass
class AblationResult:
    rows: list[AblationRow]
    diffs: list[DiffResult]

    def table_csv(self) -> str:
        lines = ["model,accuracy,weighted_precision,weighted_recall,weighted_f1,macro_f1"]
        for row in self.rows:
            m = row.metrics
            lines.append(
                f"{row.model},{m.accuracy!r},{m.weighted_precision!r},"
                f"{m.weighted_recall!r},{m.weighted_f1!r},{m.macro_f1!r}"
            )
        return "\n".join(lines) + "\n"

    def as_dict(self) -> dict:
        return {
            "models": {row.model: row.metrics.as_dict() for row in self.rows},
            "ranking": [row.model for row in self.rows],
            "diffs": [
                {"label": d.label, "metric": d.metric, "mean_diff": d.mean_diff,
                 "ci_lo": d.ci95[0], "ci_hi": d.ci95[1],
                 "p_le0": d.p_le0, "p_gt0": d.p_gt0}
                for d in self.diffs
            ],
        }


def run_ablation(predictions: dict[str, np.ndarray], y_true,
                 pairs: list[tuple[str, str, str]] | None = None,
                 metrics=DEFAULT_METRICS, n_boot: int = 1000, seed: int = 0) -> AblationResult:
    """Per-model metric table (sorted by accuracy, best first) plus pairwise
    bootstrap differences for the configured (model_a, model_b, label) pairs."""
    if len(predictions) < 2:
        raise InvalidInput("ablation needs at least two models")
    rows = []
    for name, preds in predictions.items():
        _cm, mset = evaluate(y_true, preds)
        rows.append(AblationRow(name, mset))
    rows.sort(key=lambda r: (-r.metrics.accuracy, r.model))

    diffs = []
    for a, b, tag in pairs or []:
        if a not in predictions or b not in predictions:
            raise InvalidInput(f"unknown models in pair ({a}, {b})")
        for metric in metrics:
            diffs.append(bootstrap_diff(y_true, predictions[a], predictions[b],
                                        metric, n_boot, seed, label=tag))
    return AblationResult(rows, diffs)
