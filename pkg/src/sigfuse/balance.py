"""Adaptive synthetic oversampling and fidelity validation of the result.

Oversampling density follows the local hardness of each minority sample: the
more foreign points among its nearest neighbors, the more synthetic points it
seeds. Fidelity is checked by intra-class variance agreement and a Gaussian
Frechet distance between real and synthetic feature distributions.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInput, SkippedClassWarning
from .rand import rng_for


@dataclass
class AdasynConfig:
    k: int = 5
    beta: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.k < 1:
            raise InvalidInput("k must be >= 1")
        if not 0.0 < self.beta <= 1.0:
            raise InvalidInput("beta must be in (0, 1]")


@dataclass
class AdasynResult:
    features: np.ndarray  # originals first, synthetic rows appended
    labels: np.ndarray
    synth_counts: dict[int, int]
    synthetic_mask: np.ndarray  # True for appended rows
    # One row per synthetic point: (class, seed row index, neighbor row index, lambda).
    provenance: list[tuple[int, int, int, float]] = field(default_factory=list)
    skipped_classes: list[int] = field(default_factory=list)


def _knn_indices(x: np.ndarray, query_idx: int, candidates: np.ndarray, k: int) -> np.ndarray:
    """Indices (into ``candidates``) of the k nearest rows to ``x[query_idx]``.

    Euclidean distance; ties broken by the lowest row index (stable sort).
    """
    diffs = x[candidates] - x[query_idx]
    dists = np.einsum("ij,ij->i", diffs, diffs)
    order = np.argsort(dists, kind="stable")
    return candidates[order[:k]]


def adasyn(features: np.ndarray, labels: np.ndarray, cfg: AdasynConfig) -> AdasynResult:
    """Oversample minority classes toward the majority count.

    For each minority class with m_s samples against majority m_l, the class
    receives G = (m_l - m_s) * beta synthetic points, distributed over its
    samples proportionally to the fraction of foreign points among each
    sample's k nearest neighbors. Each synthetic point lies on the segment
    between its seed and a same-class neighbor. Original rows are preserved
    untouched; synthetic rows are appended. Deterministic given cfg.seed.
    """
    x = np.asarray(features, dtype=float)
    y = np.asarray(labels, dtype=int)
    if x.ndim != 2 or x.shape[0] != y.shape[0]:
        raise InvalidInput("features must be n x d aligned with labels")
    class_ids, class_counts = np.unique(y, return_counts=True)
    if class_ids.size < 2:
        raise InvalidInput("need at least 2 classes to balance")

    rng = rng_for(cfg.seed, "adasyn")
    n = x.shape[0]
    majority = int(class_counts.max())

    new_rows: list[np.ndarray] = []
    new_labels: list[int] = []
    provenance: list[tuple[int, int, int, float]] = []
    synth_counts: dict[int, int] = {int(c): 0 for c in class_ids}
    skipped: list[int] = []

    all_idx = np.arange(n)
    # Classes in ascending id order, samples in index order: this fixes the
    # RNG consumption order and therefore the output.
    for c, m_s in zip(class_ids, class_counts):
        m_s = int(m_s)
        if m_s >= majority:
            continue
        if m_s < 2:
            warnings.warn(f"class {c}: only {m_s} sample(s); cannot interpolate, skipping",
                          SkippedClassWarning)
            skipped.append(int(c))
            continue

        g_total = (majority - m_s) * cfg.beta
        members = all_idx[y == c]
        k_hard = min(cfg.k, n - 1)
        k_same = min(cfg.k, m_s - 1)

        # Hardness: fraction of foreign-class points among the k nearest
        # neighbors over the whole set.
        ratios = np.empty(m_s)
        for j, idx in enumerate(members):
            others = all_idx[all_idx != idx]
            nearest = _knn_indices(x, idx, others, k_hard)
            ratios[j] = np.sum(y[nearest] != c) / k_hard
        total = ratios.sum()
        weights = ratios / total if total > 0 else np.full(m_s, 1.0 / m_s)

        for j, idx in enumerate(members):
            g_i = int(np.floor(weights[j] * g_total + 0.5))
            if g_i <= 0:
                continue
            pool = _knn_indices(x, idx, members[members != idx], k_same)
            for _ in range(g_i):
                z = int(pool[rng.integers(0, pool.size)])
                lam = float(rng.uniform())
                new_rows.append(x[idx] + lam * (x[z] - x[idx]))
                new_labels.append(int(c))
                provenance.append((int(c), int(idx), z, lam))
            synth_counts[int(c)] += g_i

    if new_rows:
        out_x = np.vstack([x, np.array(new_rows)])
        out_y = np.concatenate([y, np.array(new_labels, dtype=int)])
    else:
        out_x, out_y = x.copy(), y.copy()
    mask = np.zeros(out_x.shape[0], dtype=bool)
    mask[n:] = True
    return AdasynResult(out_x, out_y, synth_counts, mask, provenance, skipped)


@dataclass
class FidelityReport:
    classes: list[str]
    real_variance: list[float]
    synthetic_variance: list[float]
    fid: float
    synth_counts: list[int]
    degenerate_flags: list[bool] = field(default_factory=list)


def intra_class_variance(
    features: np.ndarray,
    labels: np.ndarray,
    synthetic_mask: np.ndarray,
    n_classes: int | None = None,
) -> tuple[list[float], list[float], list[bool]]:
    """Per-class mean (over feature dimensions) of per-dimension population
    variance, split into real and synthetic subsets.

    A subset with fewer than 2 members reports variance 0 and sets the
    class's degenerate flag.
    """
    x = np.asarray(features, dtype=float)
    y = np.asarray(labels, dtype=int)
    mask = np.asarray(synthetic_mask, dtype=bool)
    if n_classes is None:
        n_classes = int(y.max()) + 1

    real_v, synth_v, flags = [], [], []
    for c in range(n_classes):
        flagged = False
        values = []
        for subset in (x[(y == c) & ~mask], x[(y == c) & mask]):
            if subset.shape[0] < 2:
                values.append(0.0)
                flagged = True
            else:
                values.append(float(subset.var(axis=0).mean()))
        real_v.append(values[0])
        synth_v.append(values[1])
        flags.append(flagged)
    return real_v, synth_v, flags


def _sym_sqrtm(m: np.ndarray) -> np.ndarray:
    """Square root of a symmetric PSD matrix; negative eigenvalues clipped."""
    vals, vecs = np.linalg.eigh((m + m.T) / 2.0)
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.T


def frechet_distance(a: np.ndarray, b: np.ndarray, *, reg: float = 1e-6) -> float:
    """2-Wasserstein distance between Gaussian fits of the two row sets.

    ||mu_a - mu_b||^2 + Tr(Sa + Sb - 2 (Sa^1/2 Sb Sa^1/2)^1/2), with reg*I
    added to both covariances to keep rank-deficient fits well-posed.
    """
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    if a.shape[1] != b.shape[1]:
        raise InvalidInput(f"dimension mismatch: {a.shape[1]} vs {b.shape[1]}")
    if a.shape[0] < 2 or b.shape[0] < 2:
        raise InvalidInput("need at least 2 rows per set to fit a Gaussian")

    mu_a, mu_b = a.mean(axis=0), b.mean(axis=0)
    d = a.shape[1]
    cov_a = np.cov(a, rowvar=False).reshape(d, d) + reg * np.eye(d)
    cov_b = np.cov(b, rowvar=False).reshape(d, d) + reg * np.eye(d)

    sqrt_a = _sym_sqrtm(cov_a)
    cross = _sym_sqrtm(sqrt_a @ cov_b @ sqrt_a)
    value = float(np.sum((mu_a - mu_b) ** 2) + np.trace(cov_a + cov_b - 2.0 * cross))
    return max(value, 0.0)


def build_fidelity_report(
    features: np.ndarray,
    labels: np.ndarray,
    synthetic_mask: np.ndarray,
    class_names: list[str],
    synth_counts: dict[int, int],
    *,
    fid_features: np.ndarray | None = None,
) -> FidelityReport:
    """Assemble the fidelity report; FID is computed in ``fid_features`` space
    when given (e.g. deep features of a trained encoder), else in the raw
    feature space."""
    real_v, synth_v, flags = intra_class_variance(features, labels, synthetic_mask,
                                                  n_classes=len(class_names))
    space = features if fid_features is None else np.asarray(fid_features, dtype=float)
    mask = np.asarray(synthetic_mask, dtype=bool)
    if mask.any() and (~mask).sum() >= 2 and mask.sum() >= 2:
        fid = frechet_distance(space[~mask], space[mask])
    else:
        fid = 0.0
    counts = [int(synth_counts.get(c, 0)) for c in range(len(class_names))]
    return FidelityReport(list(class_names), real_v, synth_v, fid, counts, flags)


def augmented_to_csv(result: AdasynResult, path) -> None:
    """Write the augmented rows as CSV: label, synthetic (0/1), features."""
    d = result.features.shape[1]
    header = "label,synthetic," + ",".join(f"f{i}" for i in range(d))
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for row, label, synth in zip(result.features, result.labels, result.synthetic_mask):
            fh.write(f"{int(label)},{int(synth)},"
                     + ",".join(repr(float(v)) for v in row) + "\n")


def radar_export(report: FidelityReport) -> str:
    """Serialize the per-class real/synthetic variance series as JSON."""
    doc = {
        "classes": list(report.classes),
        "real_variance": [float(v) for v in report.real_variance],
        "synthetic_variance": [float(v) for v in report.synthetic_variance],
        "fid": float(report.fid),
        "synth_counts": [int(c) for c in report.synth_counts],
        "degenerate_flags": [bool(f) for f in report.degenerate_flags],
    }
    return json.dumps(doc, indent=2, sort_keys=True)


def radar_parse(text: str) -> FidelityReport:
    doc = json.loads(text)
    return FidelityReport(
        classes=list(doc["classes"]),
        real_variance=[float(v) for v in doc["real_variance"]],
        synthetic_variance=[float(v) for v in doc["synthetic_variance"]],
        fid=float(doc["fid"]),
        synth_counts=[int(c) for c in doc["synth_counts"]],
        degenerate_flags=[bool(f) for f in doc.get("degenerate_flags", [])],
    )
