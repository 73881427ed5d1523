"""Pairwise domain relationship scores and fusion-pair selection.

Three symmetric scalar scores per domain pair: mean signed cross-correlation,
mutual information between first-principal-component scores (equal-frequency
binning, nats), and a normalized cross-Gram orthogonality score. Threshold
predicates turn the scores into verdicts; the best complementary pair
(minimal mi + ortho) is selected for fusion.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .dsp import FeatureMatrix
from .errors import DegenerateInput, InvalidInput, NoComplementaryPair

VERDICT_COMPLEMENTARY = "Complementary"
VERDICT_REDUNDANT = "Redundant"
VERDICT_CONFLICTING = "Conflicting"
VERDICT_NEUTRAL = "Neutral"


@dataclass
class Thresholds:
    """Predicate bounds. Correlation below ``eps`` counts as linear
    independence; above ``delta`` as linear dependence; below ``-gamma`` as
    conflicting. ``tau_mi`` (nats) bounds acceptable shared information and
    ``tau_ortho`` the cross-Gram score."""

    eps: float = 0.15
    delta: float = 0.5
    gamma: float = 0.25
    tau_mi: float = 0.42
    tau_ortho: float = 0.3

    def __post_init__(self):
        for name in ("eps", "delta", "gamma", "tau_mi", "tau_ortho"):
            if getattr(self, name) <= 0:
                raise InvalidInput(f"threshold {name} must be positive")
        if self.eps >= self.delta:
            raise InvalidInput("require eps < delta")

    def as_dict(self) -> dict:
        return {"eps": self.eps, "delta": self.delta, "gamma": self.gamma,
                "tau_mi": self.tau_mi, "tau_ortho": self.tau_ortho}


@dataclass
class PairScore:
    domains: tuple[str, str]
    corr: float
    mi: float
    ortho: float
    verdict: str = VERDICT_NEUTRAL

    def __post_init__(self):
        if abs(self.corr) > 1.0 + 1e-9:
            raise InvalidInput(f"corr {self.corr} outside [-1, 1]")
        if self.mi < -1e-9:
            raise InvalidInput(f"mi {self.mi} negative")


@dataclass
class ComplementarityReport:
    pairs: list[PairScore]
    thresholds: Thresholds
    complementary_set: list[tuple[str, str]] = field(default_factory=list)
    best_pair: tuple[str, str] | None = None
    excluded: list[str] = field(default_factory=list)
    fallback: bool = False


def _nondegenerate_zscores(x: np.ndarray) -> np.ndarray:
    """Column z-scores (population sd); constant columns are dropped."""
    x = np.asarray(x, dtype=float)
    sd = x.std(axis=0)
    keep = sd > 1e-12
    if not np.any(keep):
        raise DegenerateInput("all feature columns are constant")
    return (x[:, keep] - x[:, keep].mean(axis=0)) / sd[keep]


def _data(f) -> np.ndarray:
    return f.data if isinstance(f, FeatureMatrix) else np.asarray(f, dtype=float)


def domain_correlation(f_i, f_j) -> float:
    """Mean of the d_i x d_j cross-correlation matrix (signed scalar)."""
    a, b = _data(f_i), _data(f_j)
    if a.shape[0] != b.shape[0]:
        raise InvalidInput("row counts differ")
    n = a.shape[0]
    if n < 8:
        raise InvalidInput(f"need at least 8 rows, got {n}")
    za, zb = _nondegenerate_zscores(a), _nondegenerate_zscores(b)
    cross = za.T @ zb / n
    return float(cross.mean())


def first_pc_scores(x: np.ndarray) -> np.ndarray:
    """Projection onto the first principal component of the z-scored matrix.

    Sign fixed so the largest-magnitude loading is positive (determinism).
    """
    z = _nondegenerate_zscores(x)
    _u, s, vt = np.linalg.svd(z, full_matrices=False)
    if s[0] <= 1e-12:
        raise DegenerateInput("first principal component has zero variance")
    v = vt[0]
    if v[np.argmax(np.abs(v))] < 0:
        v = -v
    return z @ v


def _equal_frequency_bins(scores: np.ndarray, bins: int) -> np.ndarray:
    """Rank-based quantile binning: bin sizes differ by at most one."""
    order = np.argsort(scores, kind="stable")
    ranks = np.empty_like(order)
    ranks[order] = np.arange(scores.size)
    return (ranks * bins) // scores.size


def binned_mi(a: np.ndarray, b: np.ndarray, bins: int) -> float:
    """Plug-in mutual information (nats) between two score vectors under
    equal-frequency binning."""
    n = a.size
    ia = _equal_frequency_bins(a, bins)
    ib = _equal_frequency_bins(b, bins)
    joint = np.zeros((bins, bins))
    np.add.at(joint, (ia, ib), 1.0)
    joint /= n
    pa = joint.sum(axis=1)
    pb = joint.sum(axis=0)
    nz = joint > 0
    outer = pa[:, None] * pb[None, :]
    return float(np.sum(joint[nz] * np.log(joint[nz] / outer[nz])))


def domain_mi(f_i, f_j, bins: int = 16) -> float:
    """MI between the two domains' first-PC score vectors, in nats."""
    a, b = _data(f_i), _data(f_j)
    if a.shape[0] != b.shape[0]:
        raise InvalidInput("row counts differ")
    n = a.shape[0]
    if n < 8 * bins:
        raise InvalidInput(f"need n >= 8*bins = {8 * bins}, got {n}")
    return binned_mi(first_pc_scores(a), first_pc_scores(b), bins)


def domain_orthogonality(f_i, f_j) -> float:
    """||Zi^T Zj||_F / (n * sqrt(d_i * d_j)) on column-standardized features.

    Identical single-column inputs score 1; exactly orthogonal columns 0.
    """
    a, b = _data(f_i), _data(f_j)
    if a.shape[0] != b.shape[0]:
        raise InvalidInput("row counts differ")
    n = a.shape[0]
    za, zb = _nondegenerate_zscores(a), _nondegenerate_zscores(b)
    gram = za.T @ zb
    return float(np.linalg.norm(gram) / (n * np.sqrt(za.shape[1] * zb.shape[1])))


def premise_verdict(score: PairScore, th: Thresholds) -> str:
    """Total verdict function with precedence Conflicting > Redundant >
    Complementary > Neutral."""
    if score.corr < -th.gamma:
        return VERDICT_CONFLICTING
    if abs(score.corr) > th.delta or score.mi > th.tau_mi:
        return VERDICT_REDUNDANT
    if abs(score.corr) < th.eps and score.mi < th.tau_mi and score.ortho < th.tau_ortho:
        return VERDICT_COMPLEMENTARY
    return VERDICT_NEUTRAL


def score_pair(name_i: str, f_i, name_j: str, f_j, th: Thresholds,
               bins: int = 16) -> PairScore:
    score = PairScore(
        domains=(name_i, name_j),
        corr=domain_correlation(f_i, f_j),
        mi=domain_mi(f_i, f_j, bins),
        ortho=domain_orthogonality(f_i, f_j),
    )
    score.verdict = premise_verdict(score, th)
    return score


def assess_domains(domains: dict[str, np.ndarray | FeatureMatrix],
                   th: Thresholds | None = None, bins: int = 16) -> ComplementarityReport:
    """Score every unordered domain pair and mark the complementary set."""
    th = th or Thresholds()
    names = list(domains)
    if len(names) < 2:
        raise InvalidInput("need at least two domains")
    pairs = [
        score_pair(a, domains[a], b, domains[b], th, bins)
        for a, b in combinations(names, 2)
    ]
    comp = [p.domains for p in pairs if p.verdict == VERDICT_COMPLEMENTARY]
    report = ComplementarityReport(pairs, th, complementary_set=comp)
    if comp:
        report.best_pair = select_best_pair(report)
        lookup = {frozenset(p.domains): p for p in pairs}
        for k in names:
            if k in report.best_pair:
                continue
            ok = all(
                lookup[frozenset((k, m))].verdict == VERDICT_COMPLEMENTARY
                for m in report.best_pair
            )
            if not ok:
                report.excluded.append(k)
    return report


def select_best_pair(report: ComplementarityReport) -> tuple[str, str]:
    """The complementary pair minimizing mi + ortho; ties broken by |corr|,
    then lexicographic domain order."""
    candidates = [p for p in report.pairs if p.domains in report.complementary_set
                  or tuple(reversed(p.domains)) in report.complementary_set]
    if not candidates:
        raise NoComplementaryPair("complementary set is empty")
    best = min(candidates, key=lambda p: (p.mi + p.ortho, abs(p.corr), p.domains))
    return best.domains


def report_to_dict(report: ComplementarityReport) -> dict:
    return {
        "thresholds": report.thresholds.as_dict(),
        "pairs": [
            {"domains": list(p.domains), "corr": p.corr, "mi": p.mi,
             "ortho": p.ortho, "verdict": p.verdict}
            for p in report.pairs
        ],
        "complementary_set": [list(p) for p in report.complementary_set],
        "best_pair": list(report.best_pair) if report.best_pair else None,
        "excluded": list(report.excluded),
        "fallback": report.fallback,
        "heatmap": heatmap_matrices(report),
    }


def report_to_json(report: ComplementarityReport) -> str:
    return json.dumps(report_to_dict(report), indent=2, sort_keys=True)


def heatmap_matrices(report: ComplementarityReport) -> dict:
    """Square corr and MI matrices over the domain names (heatmap export)."""
    names = sorted({d for p in report.pairs for d in p.domains})
    idx = {n: i for i, n in enumerate(names)}
    k = len(names)
    corr = np.eye(k)
    mi = np.zeros((k, k))
    for p in report.pairs:
        i, j = idx[p.domains[0]], idx[p.domains[1]]
        corr[i, j] = corr[j, i] = p.corr
        mi[i, j] = mi[j, i] = p.mi
    return {"domains": names, "corr": corr.tolist(), "mi": mi.tolist()}


def heatmap_csv(report: ComplementarityReport) -> str:
    doc = heatmap_matrices(report)
    names = doc["domains"]
    lines = ["matrix,row," + ",".join(names)]
    for tag in ("corr", "mi"):
        for name, row in zip(names, doc[tag]):
            lines.append(f"{tag},{name}," + ",".join(repr(v) for v in row))
    return "\n".join(lines) + "\n"
