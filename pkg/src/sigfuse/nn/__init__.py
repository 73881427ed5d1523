"""Minimal reverse-mode differentiable tensor core (numpy, desk scale).

Channels-last layout throughout: 1D inputs are (batch, length, channels),
2D inputs are (batch, height, width, channels). All randomness (weight
init, dropout masks, shuffling) comes from seeded generators consumed in a
documented order, so runs are bit-reproducible.
"""

from .layers import (
    Add,
    BatchNorm,
    Concat,
    Conv1D,
    Conv2D,
    Dense,
    Dropout,
    Flatten,
    Layer,
    LayerNorm,
    MaxPool1D,
    MaxPool2D,
    MultiHeadAttention,
    ReLU,
    Softmax,
    TransformerBlock,
    layer_from_spec,
)
from .net import FusionNet, Sequential, net_from_spec
from .losses import (
    complementary_loss,
    complementary_penalty,
    cross_entropy,
    grad_wrt_logits,
)
from .optim import Adam
from .train import TrainConfig, train
from .gradcheck import GradCheckReport, grad_check, layer_grad_check
from .persist import load_net, save_net

__all__ = [
    "Add", "BatchNorm", "Concat", "Conv1D", "Conv2D", "Dense", "Dropout",
    "Flatten", "Layer", "LayerNorm", "MaxPool1D", "MaxPool2D",
    "MultiHeadAttention", "ReLU", "Softmax", "TransformerBlock",
    "layer_from_spec", "FusionNet", "Sequential", "net_from_spec",
    "complementary_loss", "complementary_penalty", "cross_entropy",
    "grad_wrt_logits", "Adam", "TrainConfig", "train",
    "GradCheckReport", "grad_check", "layer_grad_check",
    "load_net", "save_net",
]
