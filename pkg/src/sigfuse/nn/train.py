"""Mini-batch training loop with early stopping on validation accuracy.

RNG consumption order per epoch: one permutation for shuffling, then dropout
masks in layer order within each batch. Identical seeds therefore give
bit-identical parameter trajectories.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import InvalidInput, NumericError
from ..rand import rng_for
from .losses import complementary_loss, cross_entropy, grad_wrt_logits
from .net import FusionNet
from .optim import Adam


@dataclass
class TrainConfig:
    lr: float = 1e-3
    epochs: int = 10
    batch_size: int = 16
    loss: str = "cross_entropy"  # or "complementary"
    lambda_mi: float = 0.1
    lambda_ortho: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    patience: int = 0  # 0 disables early stopping

    def __post_init__(self):
        if self.lr < 0:
            raise InvalidInput("lr must be >= 0")
        if self.epochs < 1:
            raise InvalidInput("epochs must be >= 1")
        if self.batch_size < 1:
            raise InvalidInput("batch_size must be >= 1")
        if self.loss not in ("cross_entropy", "complementary"):
            raise InvalidInput(f"unknown loss {self.loss!r}")


@dataclass
class TrainHistory:
    train_loss: list[float] = field(default_factory=list)
    train_acc: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    val_acc: list[float] = field(default_factory=list)
    stopped_epoch: int | None = None
    best_epoch: int = 0

    def as_dict(self) -> dict:
        return {
            "train_loss": self.train_loss,
            "train_acc": self.train_acc,
            "val_loss": self.val_loss,
            "val_acc": self.val_acc,
            "stopped_epoch": self.stopped_epoch,
            "best_epoch": self.best_epoch,
        }


def _as_input_list(inputs):
    return inputs if isinstance(inputs, (list, tuple)) else [inputs]


def _slice_inputs(inputs, idx, multi):
    if multi:
        return [np.asarray(x)[idx] for x in inputs]
    return np.asarray(inputs)[idx]


def _batch_bounds(n: int, batch_size: int, min_tail: int) -> list[tuple[int, int]]:
    bounds = [(s, min(s + batch_size, n)) for s in range(0, n, batch_size)]
    # Fold a tail smaller than min_tail into the previous batch (the
    # complementarity penalty needs a minimum batch to be well defined).
    if len(bounds) > 1 and bounds[-1][1] - bounds[-1][0] < min_tail:
        bounds[-2] = (bounds[-2][0], bounds[-1][1])
        bounds.pop()
    return bounds


def _accuracy(probs, onehot) -> float:
    return float(np.mean(probs.argmax(axis=1) == onehot.argmax(axis=1)))


def evaluate_loss(net, inputs, onehot) -> tuple[float, float]:
    multi = isinstance(net, FusionNet)
    probs, _ = net.forward(inputs if multi else _as_input_list(inputs)[0], training=False)
    return cross_entropy(probs, onehot) + net.reg_loss(), _accuracy(probs, onehot)


def train(net, inputs, onehot, cfg: TrainConfig, val_inputs=None, val_onehot=None):
    """Train ``net`` in place; returns a TrainHistory.

    The state with the best validation accuracy is restored at the end. With
    ``cfg.patience`` > 0, training stops after that many non-improving epochs.
    The complementary loss applies to two-branch fusion nets and injects its
    penalty gradients at the adapter outputs.
    """
    multi = isinstance(net, FusionNet)
    xs = list(inputs) if multi else [inputs]
    n = np.asarray(xs[0]).shape[0]
    if onehot.shape[0] != n:
        raise InvalidInput("inputs and labels are misaligned")
    use_comp = cfg.loss == "complementary"
    if use_comp and (not multi or len(net.branches) != 2):
        raise InvalidInput("complementary loss requires a two-branch fusion net")

    has_val = val_inputs is not None and val_onehot is not None
    optimizer = Adam(cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps)
    rng = rng_for(cfg.seed, "train", getattr(net, "name", "net"))
    history = TrainHistory()

    min_tail = 4 if use_comp else 1
    best_val = -np.inf
    best_params = None
    stale = 0

    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        epoch_hits = 0
        for start, stop in _batch_bounds(n, cfg.batch_size, min_tail):
            idx = order[start:stop]
            batch_x = _slice_inputs(xs, idx, True)
            batch_y = onehot[idx]
            if multi:
                probs, caches = net.forward(batch_x, training=True, rng=rng)
            else:
                probs, caches = net.forward(batch_x[0], training=True, rng=rng)

            if use_comp:
                f_i, f_j = net.adapter_outputs(caches)
                loss, dlogits, df_i, df_j = complementary_loss(
                    probs, batch_y, f_i, f_j, cfg.lambda_mi, cfg.lambda_ortho)
                grads = net.backward_from_logits(dlogits, caches, [df_i, df_j])
            else:
                loss = cross_entropy(probs, batch_y)
                dlogits = grad_wrt_logits(probs, batch_y)
                if multi:
                    grads = net.backward_from_logits(dlogits, caches, None)
                else:
                    grads = net.backward_from_logits(dlogits, caches)
            loss += net.reg_loss()

            if not np.isfinite(loss):
                raise NumericError(
                    f"non-finite loss at epoch {epoch + 1}, batch {start // cfg.batch_size + 1}")
            optimizer.step(net.trainable_params(), grads)
            epoch_loss += loss * idx.size
            epoch_hits += int(np.sum(probs.argmax(axis=1) == batch_y.argmax(axis=1)))

        history.train_loss.append(epoch_loss / n)
        history.train_acc.append(epoch_hits / n)

        if has_val:
            val_loss, val_acc = evaluate_loss(net, val_inputs, val_onehot)
        else:
            val_loss, val_acc = history.train_loss[-1], history.train_acc[-1]
        history.val_loss.append(val_loss)
        history.val_acc.append(val_acc)

        if val_acc > best_val:
            best_val = val_acc
            best_params = {k: v.copy() for k, v in net.all_params().items()}
            history.best_epoch = epoch
            stale = 0
        else:
            stale += 1
            if cfg.patience > 0 and stale >= cfg.patience:
                history.stopped_epoch = epoch + 1
                break

    if best_params is not None:
        net.set_params(best_params)
    return history
