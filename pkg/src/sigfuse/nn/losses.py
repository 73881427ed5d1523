"""Classification losses, including the complementarity-aware objective.

The complementarity-aware loss augments cross-entropy with two differentiable
penalties on the pair of fused branch activations: a redundancy term (mean
squared per-column batch correlation, a differentiable surrogate for the
mutual-information penalty) and an orthogonality term (normalized Frobenius
norm of the cross-Gram matrix). Both push the branches toward decorrelated,
mutually orthogonal features while the task loss preserves discriminability.
"""

from __future__ import annotations

import numpy as np

from ..errors import InvalidInput

_EPS_PROB = 1e-12
_EPS_VAR = 1e-8


def cross_entropy(probs: np.ndarray, onehot: np.ndarray) -> float:
    """Mean categorical cross-entropy of probabilities against one-hot labels."""
    p = np.clip(probs, _EPS_PROB, 1.0)
    return float(-np.sum(onehot * np.log(p)) / probs.shape[0])


def grad_wrt_logits(probs: np.ndarray, onehot: np.ndarray) -> np.ndarray:
    """Gradient of mean CE with respect to the pre-softmax logits: (p - y)/n."""
    return (probs - onehot) / probs.shape[0]


def _batch_standardize(f: np.ndarray):
    mean = f.mean(axis=0)
    var = f.var(axis=0)
    inv = 1.0 / np.sqrt(var + _EPS_VAR)
    z = (f - mean) * inv
    return z, inv


def _standardize_backward(dz: np.ndarray, z: np.ndarray, inv: np.ndarray) -> np.ndarray:
    # Per-column z-score backward (mean and variance both depend on f).
    return inv * (dz - dz.mean(axis=0) - z * (dz * z).mean(axis=0))


def complementary_penalty(f_i: np.ndarray, f_j: np.ndarray):
    """Redundancy and orthogonality penalties plus their gradients.

    Returns (l_mi, l_ortho, d_mi_i, d_mi_j, d_o_i, d_o_j). ``l_mi`` is the
    mean squared correlation between corresponding columns of the two
    batch-standardized activation matrices (1.0 when f_j == f_i); ``l_ortho``
    is ||z_i^T z_j||_F / (n * sqrt(d_i * d_j)).
    """
    f_i = np.asarray(f_i, dtype=float)
    f_j = np.asarray(f_j, dtype=float)
    n = f_i.shape[0]
    if n < 4:
        raise InvalidInput(f"complementarity penalty needs batch >= 4, got {n}")
    if f_j.shape[0] != n:
        raise InvalidInput("feature batches must be aligned")
    if f_i.shape[1] != f_j.shape[1]:
        raise InvalidInput("redundancy penalty requires equal adapter widths")
    d = f_i.shape[1]

    z_i, inv_i = _batch_standardize(f_i)
    z_j, inv_j = _batch_standardize(f_j)

    # Matched-column correlations.
    corr = (z_i * z_j).sum(axis=0) / n
    l_mi = float(np.mean(corr**2))
    dz_i_mi = (2.0 / (d * n)) * corr * z_j
    dz_j_mi = (2.0 / (d * n)) * corr * z_i

    gram = z_i.T @ z_j
    norm = float(np.sqrt(np.sum(gram**2)))
    denom = n * np.sqrt(d * d)
    l_ortho = norm / denom
    if norm > 0:
        dgram = gram / (norm * denom)
        dz_i_o = z_j @ dgram.T
        dz_j_o = z_i @ dgram
    else:
        dz_i_o = np.zeros_like(z_i)
        dz_j_o = np.zeros_like(z_j)

    d_mi_i = _standardize_backward(dz_i_mi, z_i, inv_i)
    d_mi_j = _standardize_backward(dz_j_mi, z_j, inv_j)
    d_o_i = _standardize_backward(dz_i_o, z_i, inv_i)
    d_o_j = _standardize_backward(dz_j_o, z_j, inv_j)
    return l_mi, l_ortho, d_mi_i, d_mi_j, d_o_i, d_o_j


def complementary_loss(
    probs: np.ndarray,
    onehot: np.ndarray,
    f_i: np.ndarray,
    f_j: np.ndarray,
    lam_mi: float,
    lam_ortho: float,
):
    """Total loss CE + lam_mi * L_MI + lam_ortho * L_Ortho with its gradients.

    Returns (loss, dlogits, df_i, df_j). With both weights zero this is
    exactly plain cross-entropy (the penalty is not evaluated at all, so the
    parameter trajectory matches a plain CE run bit for bit).
    """
    ce = cross_entropy(probs, onehot)
    dlogits = grad_wrt_logits(probs, onehot)
    if lam_mi == 0.0 and lam_ortho == 0.0:
        return ce, dlogits, np.zeros_like(np.asarray(f_i, dtype=float)), \
            np.zeros_like(np.asarray(f_j, dtype=float))
    l_mi, l_ortho, d_mi_i, d_mi_j, d_o_i, d_o_j = complementary_penalty(f_i, f_j)
    loss = ce + lam_mi * l_mi + lam_ortho * l_ortho
    df_i = lam_mi * d_mi_i + lam_ortho * d_o_i
    df_j = lam_mi * d_mi_j + lam_ortho * d_o_j
    return loss, dlogits, df_i, df_j
