"""Builders for the encoder zoo and the intermediate-fusion hybrids.

Width-scaled versions of the reference stacks: a 3-block 1D CNN for raw
signals, a 4-block 2D CNN for scalograms, an attention-augmented 1D CNN for
spectral features, a small dense encoder for generic feature vectors, and a
multi-branch fusion net that freezes pretrained trunks and learns per-branch
adapters plus a shared head.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .dsp import DEEP, FeatureMatrix
from .errors import BuildError, StateError
from .nn import (
    BatchNorm,
    Concat,
    Conv1D,
    Conv2D,
    Dense,
    Dropout,
    Flatten,
    FusionNet,
    MaxPool1D,
    MaxPool2D,
    ReLU,
    Sequential,
    Softmax,
    TransformerBlock,
)
from .nn.net import _Branch

# Full-scale reference widths; ArchScale.width_mult shrinks them for desk runs.
CNN1D_FILTERS = (64, 128, 256)
CNN1D_KERNELS = (7, 7, 5)
CNN2D_FILTERS = (32, 64, 128, 256)
DENSE_1D = 512
DENSE_2D = 512
DENSE_TRANSFORMER = 1024
TRANSFORMER_CONV_FILTERS = 128
ADAPTER_UNITS = 256
FUSION_UNITS = 256
PAPER_HEADS = 12
PAPER_KEY_DIM = 256


@dataclass
class ArchScale:
    width_mult: float = 1.0
    heads: int = 2
    key_dim: int = 16
    ff_dim: int | None = None  # transformer feed-forward width; default 512*width_mult
    fusion_dense: int | None = None  # fusion head width; default 256*width_mult
    batchnorm: bool = True
    # Running-stat momentum; small step budgets need faster-moving statistics
    # than the 0.99 layer default.
    bn_momentum: float = 0.99

    def __post_init__(self):
        if not 0.0 < self.width_mult <= 1.0:
            raise BuildError("width_mult must be in (0, 1]")
        if self.heads < 1 or self.key_dim < 1:
            raise BuildError("heads and key_dim must be >= 1")
        if not 0.0 <= self.bn_momentum < 1.0:
            raise BuildError("bn_momentum must be in [0, 1)")

    def bn(self, name: str) -> list:
        return [BatchNorm(momentum=self.bn_momentum, name=name)] if self.batchnorm else []

    def filters(self, base: int) -> int:
        return max(4, int(round(base * self.width_mult)))

    def units(self, base: int) -> int:
        return max(8, int(round(base * self.width_mult)))


@dataclass
class DeepFeatures:
    matrix: FeatureMatrix
    source: str  # OneD | TwoD | Transformer | Dense
    layer_tag: str


def build_1dcnn(scale: ArchScale, input_len: int, n_classes: int, seed: int = 0) -> Sequential:
    """Three conv blocks (widths 64/128/256 scaled, kernels 7/7/5), then a
    dense feature stage and the softmax head. Tap: the post-activation dense
    feature layer."""
    layers = []
    for i, (base, k) in enumerate(zip(CNN1D_FILTERS, CNN1D_KERNELS), start=1):
        layers += [
            Conv1D(scale.filters(base), k, "same", l2=1e-3, name=f"conv{i}"),
            ReLU(name=f"relu{i}"),
            *scale.bn(f"bn{i}"),
            MaxPool1D(2, name=f"pool{i}"),
        ]
    layers += [
        Flatten(name="flatten"),
        Dense(scale.units(DENSE_1D), l2=1e-3, name="feat_dense"),
        ReLU(name="feat_relu"),
        Dropout(0.5, name="drop"),
        Dense(n_classes, name="logits"),
        Softmax(name="probs"),
    ]
    return Sequential(layers, input_shape=(input_len, 1), seed=seed,
                      name="cnn1d", tap="feat_relu")


def build_2dcnn(scale: ArchScale, input_size: tuple[int, int], n_classes: int,
                seed: int = 0) -> Sequential:
    """Four conv blocks (widths 32/64/128/256 scaled, 3x3), dropout in block 2.
    Tap: the post-activation dense feature layer; hybrid reuse cuts earlier,
    at the flattened conv features (see HYBRID_TAPS)."""
    s, t = input_size
    if s < 16 or t < 16:
        raise BuildError(f"input {input_size} too small for four 2x2 poolings (need >= 16)")
    layers = []
    for i, base in enumerate(CNN2D_FILTERS, start=1):
        layers += [
            Conv2D(scale.filters(base), (3, 3), "same", name=f"conv{i}"),
            ReLU(name=f"relu{i}"),
            *scale.bn(f"bn{i}"),
            MaxPool2D((2, 2), name=f"pool{i}"),
        ]
        if i == 2:
            layers.append(Dropout(0.2, name="drop_block2"))
    layers += [
        Flatten(name="flatten"),
        Dense(scale.units(DENSE_2D), name="feat_dense"),
        ReLU(name="feat_relu"),
        Dropout(0.5, name="drop"),
        Dense(n_classes, name="logits"),
        Softmax(name="probs"),
    ]
    return Sequential(layers, input_shape=(s, t, 1), seed=seed,
                      name="cnn2d", tap="feat_relu")


def build_cnn_transformer(scale: ArchScale, input_dim: int, n_classes: int,
                          seed: int = 0) -> Sequential:
    """Conv front end over spectral features, attention block, dense stage.

    Dropout and L2 are applied only in the post-attention stage, not inside
    the encoder block.
    """
    ff_dim = scale.ff_dim or scale.units(512)
    layers = [
        Conv1D(scale.filters(TRANSFORMER_CONV_FILTERS), 5, "same", l2=5e-5, name="conv1"),
        ReLU(name="relu1"),
        MaxPool1D(2, name="pool1"),
        TransformerBlock(scale.heads, scale.key_dim, ff_dim, name="attn"),
        Flatten(name="flatten"),
        Dense(scale.units(DENSE_TRANSFORMER), l2=5e-5, name="feat_dense"),
        ReLU(name="feat_relu"),
        Dropout(0.1, name="drop"),
        Dense(n_classes, name="logits"),
        Softmax(name="probs"),
    ]
    if input_dim < 2:
        raise BuildError("transformer input_dim must be >= 2")
    return Sequential(layers, input_shape=(input_dim, 1), seed=seed,
                      name="transformer", tap="feat_relu")


def build_dense_encoder(scale: ArchScale, input_dim: int, n_classes: int,
                        seed: int = 0, name: str = "dense_enc") -> Sequential:
    """Small two-stage dense encoder for generic (already extracted) feature
    vectors; used by the constructed-domain benchmark."""
    layers = [
        Dense(scale.units(64), name="hidden"),
        ReLU(name="hidden_relu"),
        Dense(scale.units(32), name="feat_dense"),
        ReLU(name="feat_relu"),
        Dense(n_classes, name="logits"),
        Softmax(name="probs"),
    ]
    return Sequential(layers, input_shape=(input_dim,), seed=seed, name=name,
                      tap="feat_relu")


def extract_deep_features(net: Sequential, inputs: np.ndarray, source: str = "",
                          tap: str | None = None) -> DeepFeatures:
    """Eval-mode activations at the net's tap, one row per input row."""
    tap = tap or net.tap
    if tap is None:
        raise StateError(f"{net.name}: no feature tap defined")
    acts = net.forward_to_tap(np.asarray(inputs, dtype=float), tap)
    flat = acts.reshape(acts.shape[0], -1)
    matrix = FeatureMatrix(flat, DEEP)
    return DeepFeatures(matrix, source or net.name, layer_tag=tap)


def _clone_layers(layers):
    """Deep-copy built layers (params and running stats included)."""
    import copy

    return [copy.deepcopy(layer) for layer in layers]


def build_hybrid(
    branches: list[tuple[Sequential, str | None]],
    scale: ArchScale,
    n_classes: int,
    seed: int = 0,
    name: str = "hybrid",
    freeze: bool = True,
) -> FusionNet:
    """Intermediate fusion of 2 or 3 pretrained encoders.

    Per branch: pretrained layers up to the tap (frozen by default) ->
    Flatten -> Dropout(0.5) -> Dense(adapter width, relu). The head
    concatenates the adapters and applies Dense(+L1) -> Dropout -> softmax
    classifier. Only adapters and head train unless ``freeze`` is False.
    """
    if len(branches) not in (2, 3):
        raise BuildError(f"hybrid fusion expects 2 or 3 branches, got {len(branches)}")
    from .rand import rng_for

    rng = rng_for(seed, "init", name)
    adapter_units = scale.units(ADAPTER_UNITS)
    fusion_units = scale.fusion_dense or scale.units(FUSION_UNITS)

    built = []
    for bi, (net, tap) in enumerate(branches):
        tap_idx = net.tap_index(tap)
        trunk = _clone_layers(net.layers[: tap_idx + 1])
        trunk_out = trunk[-1].out_shape
        adapter = [
            Flatten(name="flatten"),
            Dropout(0.5, name="drop"),
            Dense(adapter_units, name="adapter_dense"),
            ReLU(name="adapter_relu"),
        ]
        shape = trunk_out
        for layer in adapter:
            shape = layer.build(shape, rng)
        built.append(_Branch(trunk, adapter, net.input_shape, freeze, f"branch_{net.name}"))

    head = [Concat(name="concat")]
    shape = (adapter_units * len(branches),)
    for layer in (
        Dense(fusion_units, l1=0.01, name="fusion_dense"),
        ReLU(name="fusion_relu"),
        Dropout(0.5, name="fusion_drop"),
        Dense(n_classes, name="logits"),
        Softmax(name="probs"),
    ):
        shape = layer.build(shape, rng)
        head.append(layer)
    return FusionNet(built, head, seed=seed, name=name)


# Where each pretrained encoder is cut when reused as a fusion branch. The
# 1D and transformer trunks keep their dense feature stage; the 2D trunk is
# cut at the flattened conv features.
HYBRID_TAPS = {"cnn1d": "feat_relu", "cnn2d": "flatten", "transformer": "feat_relu",
               "dense_enc": "feat_relu"}


def default_hybrid_tap(net: Sequential) -> str | None:
    return HYBRID_TAPS.get(net.name, net.tap)


def architecture_manifest(net) -> str:
    """JSON description of the layer stack for auditing a run."""
    doc = net.spec()
    doc["param_count"] = net.param_count()
    return json.dumps(doc, indent=2, sort_keys=True)
