"""Central-difference verification of the analytic gradients.

Every probe forward uses a freshly reseeded generator so stochastic layers
(dropout) draw identical masks, and BatchNorm running-stat updates are
disabled for the duration, keeping the loss a pure function of the
parameters.
"""

from __future__ import annotations

from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np

from .layers import BatchNorm, Layer
from .losses import complementary_loss, cross_entropy, grad_wrt_logits
from .net import FusionNet, Sequential


@dataclass
class GradCheckReport:
    max_rel_err: float
    per_param: dict[str, float] = field(default_factory=dict)
    tol: float = 1e-4

    @property
    def passed(self) -> bool:
        return self.max_rel_err < self.tol


def _rel_err(a: np.ndarray, n: np.ndarray) -> float:
    # The denominator floor keeps finite-difference noise on genuinely zero
    # gradients (e.g. a key bias, which softmax invariance cancels exactly)
    # from registering as disagreement, while a dropped term of any
    # consequential magnitude still fails loudly.
    denom = np.maximum(np.abs(a) + np.abs(n), 1e-3)
    return float(np.max(np.abs(a - n) / denom)) if a.size else 0.0


def _collect_layers(layers) -> list[Layer]:
    out = []
    for layer in layers:
        out.append(layer)
        sub = getattr(layer, "sublayers", None)
        if sub:
            out.extend(_collect_layers(sub))
    return out


def _iter_batchnorms(net):
    layers: list[Layer] = []
    if isinstance(net, Sequential):
        layers = _collect_layers(net.layers)
    elif isinstance(net, FusionNet):
        for b in net.branches:
            layers += _collect_layers(b.trunk) + _collect_layers(b.adapter)
        layers += _collect_layers(net.head)
    return [l for l in layers if isinstance(l, BatchNorm)]


@contextmanager
def _frozen_running_stats(net):
    bns = _iter_batchnorms(net)
    saved = [(bn.update_running, bn.running_mean.copy(), bn.running_var.copy())
             for bn in bns]
    for bn in bns:
        bn.update_running = False
    try:
        yield
    finally:
        for bn, (flag, mean, var) in zip(bns, saved):
            bn.update_running = flag
            bn.running_mean, bn.running_var = mean, var


def grad_check(net, inputs, onehot, *, eps: float = 1e-5, tol: float = 1e-4,
               training: bool = True, seed: int = 0,
               lambda_mi: float = 0.0, lambda_ortho: float = 0.0) -> GradCheckReport:
    """Compare analytic parameter gradients against central differences.

    Uses the softmax + cross-entropy loss (plus the complementarity penalty
    when the lambdas are nonzero on a two-branch fusion net, and any layer
    regularization). O(P) forward evaluations; intended for small nets.
    """
    multi = isinstance(net, FusionNet)

    def fresh_rng():
        return np.random.default_rng(seed)

    def loss_and_grads():
        probs, caches = net.forward(inputs, training=training, rng=fresh_rng())
        if multi and (lambda_mi or lambda_ortho):
            f_i, f_j = net.adapter_outputs(caches)
            loss, dlogits, df_i, df_j = complementary_loss(
                probs, onehot, f_i, f_j, lambda_mi, lambda_ortho)
            grads = net.backward_from_logits(dlogits, caches, [df_i, df_j])
        else:
            loss = cross_entropy(probs, onehot)
            dlogits = grad_wrt_logits(probs, onehot)
            if multi:
                grads = net.backward_from_logits(dlogits, caches, None)
            else:
                grads = net.backward_from_logits(dlogits, caches)
        return loss + net.reg_loss(), grads

    def loss_only():
        probs, caches = net.forward(inputs, training=training, rng=fresh_rng())
        if multi and (lambda_mi or lambda_ortho):
            f_i, f_j = net.adapter_outputs(caches)
            loss, _, _, _ = complementary_loss(probs, onehot, f_i, f_j,
                                               lambda_mi, lambda_ortho)
        else:
            loss = cross_entropy(probs, onehot)
        return loss + net.reg_loss()

    with _frozen_running_stats(net):
        _, analytic = loss_and_grads()
        per_param = {}
        params = net.trainable_params()
        for path, arr in params.items():
            a = analytic.get(path, np.zeros_like(arr))
            numeric = np.zeros_like(arr)
            flat = arr.reshape(-1)
            nflat = numeric.reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + eps
                hi = loss_only()
                flat[i] = orig - eps
                lo = loss_only()
                flat[i] = orig
                nflat[i] = (hi - lo) / (2.0 * eps)
            per_param[path] = _rel_err(a, numeric)

    worst = max(per_param.values()) if per_param else 0.0
    return GradCheckReport(worst, per_param, tol)


def layer_grad_check(layer: Layer, x: np.ndarray, *, eps: float = 1e-5,
                     tol: float = 1e-4, training: bool = True,
                     seed: int = 0) -> GradCheckReport:
    """Check one layer in isolation with a fixed random linear probe loss
    L = sum(forward(x) * R); verifies both parameter and input gradients."""
    rng = np.random.default_rng(seed)
    if layer.out_shape is None:
        raise ValueError("layer must be built before checking")

    def fresh_rng():
        return np.random.default_rng(seed + 1)

    if isinstance(layer, BatchNorm):
        layer.update_running = False

    y0, cache = layer.forward(x, training=training, rng=fresh_rng())
    probe = rng.standard_normal(y0.shape)

    def loss_at():
        y, _ = layer.forward(x, training=training, rng=fresh_rng())
        return float(np.sum(y * probe)) + layer.reg_loss()

    dx, grads = layer.backward(probe, cache)
    grads = dict(grads)
    grads["__input__"] = dx

    per_param = {}
    targets = dict(layer.params)
    targets["__input__"] = x
    for path, arr in targets.items():
        a = grads.get(path, np.zeros_like(arr))
        numeric = np.zeros_like(arr, dtype=float)
        flat = arr.reshape(-1)
        nflat = numeric.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            hi = loss_at()
            flat[i] = orig - eps
            lo = loss_at()
            flat[i] = orig
            nflat[i] = (hi - lo) / (2.0 * eps)
        per_param[path] = _rel_err(np.asarray(a, dtype=float), numeric)

    worst = max(per_param.values()) if per_param else 0.0
    return GradCheckReport(worst, per_param, tol)
