"""Network containers: a sequential stack and a multi-branch fusion net.

Both expose the same training surface:

    probs, caches = net.forward(inputs, training, rng)
    grads         = net.backward_from_logits(dlogits, caches, ...)
    net.trainable_params() / net.all_params()

``backward_from_logits`` starts just below the final Softmax layer, which is
where a fused softmax + cross-entropy gradient enters.
"""

from __future__ import annotations

import numpy as np

from ..errors import BuildError, ShapeError, StateError
from ..rand import rng_for
from .layers import Concat, Layer, Softmax, layer_from_spec


class Sequential:
    """An ordered layer stack with named taps for feature extraction."""

    def __init__(self, layers: list[Layer], input_shape, seed: int = 0,
                 name: str = "net", tap: str | None = None, build: bool = True):
        self.layers = layers
        self.input_shape = tuple(input_shape)
        self.seed = seed
        self.name = name
        self.tap = tap  # layer name whose output is the deep-feature tap
        self.frozen = False
        if build:
            self._build()

    def _build(self):
        # One generator, consumed layer by layer in order: init is reproducible.
        rng = rng_for(self.seed, "init", self.name)
        shape = self.input_shape
        for layer in self.layers:
            shape = layer.build(shape, rng)
        self.output_shape = shape

    # -- parameters -----------------------------------------------------------
    def all_params(self, prefix: str = "") -> dict[str, np.ndarray]:
        out = {}
        for i, layer in enumerate(self.layers):
            for pname, arr in layer.params.items():
                out[f"{prefix}{i}.{layer.name}.{pname}"] = arr
        return out

    def trainable_params(self) -> dict[str, np.ndarray]:
        return {} if self.frozen else self.all_params()

    def set_params(self, values: dict[str, np.ndarray]) -> None:
        own = self.all_params()
        for path, arr in values.items():
            if path not in own:
                raise StateError(f"unknown parameter {path!r}")
            np.copyto(own[path], arr)

    def reg_loss(self) -> float:
        return sum(layer.reg_loss() for layer in self.layers)

    # -- compute ----------------------------------------------------------------
    def forward(self, x, training: bool = False, rng=None):
        x = np.asarray(x, dtype=float)
        if x.shape[1:] != self.input_shape:
            raise ShapeError(f"{self.name}: expected input {self.input_shape}, got {x.shape[1:]}")
        caches = []
        out = x
        for layer in self.layers:
            out, cache = layer.forward(out, training=training, rng=rng)
            caches.append(cache)
        return out, caches

    def predict_probs(self, x) -> np.ndarray:
        out, _ = self.forward(x, training=False)
        return out

    def predict(self, x) -> np.ndarray:
        return self.predict_probs(x).argmax(axis=1)

    def backward(self, dout, caches):
        """Generic reverse pass through every layer (including Softmax)."""
        grads: dict[str, np.ndarray] = {}
        for i in range(len(self.layers) - 1, -1, -1):
            layer = self.layers[i]
            dout, layer_grads = layer.backward(dout, caches[i])
            for pname, g in layer_grads.items():
                grads[f"{i}.{layer.name}.{pname}"] = g
        return dout, grads

    def backward_from_logits(self, dlogits, caches):
        """Reverse pass starting below the final Softmax layer."""
        if not isinstance(self.layers[-1], Softmax):
            raise StateError(f"{self.name}: final layer is not Softmax")
        grads: dict[str, np.ndarray] = {}
        dout = dlogits
        for i in range(len(self.layers) - 2, -1, -1):
            layer = self.layers[i]
            dout, layer_grads = layer.backward(dout, caches[i])
            for pname, g in layer_grads.items():
                grads[f"{i}.{layer.name}.{pname}"] = g
        return grads

    def forward_to_tap(self, x, tap: str | None = None) -> np.ndarray:
        """Eval-mode forward stopping at (and including) the tap layer."""
        tap = tap or self.tap
        if tap is None:
            raise StateError(f"{self.name}: no tap defined")
        names = [layer.name for layer in self.layers]
        if tap not in names:
            raise StateError(f"{self.name}: tap {tap!r} not found among {names}")
        out = np.asarray(x, dtype=float)
        for layer in self.layers:
            out, _ = layer.forward(out, training=False)
            if layer.name == tap:
                return out
        raise StateError(f"{self.name}: tap {tap!r} unreachable")  # pragma: no cover

    def tap_index(self, tap: str | None = None) -> int:
        tap = tap or self.tap
        for i, layer in enumerate(self.layers):
            if layer.name == tap:
                return i
        raise StateError(f"{self.name}: tap {tap!r} not found")

    # -- manifest ---------------------------------------------------------------
    def spec(self) -> dict:
        return {
            "type": "Sequential",
            "name": self.name,
            "seed": self.seed,
            "input_shape": list(self.input_shape),
            "tap": self.tap,
            "layers": [layer.spec() for layer in self.layers],
        }

    def param_count(self) -> int:
        return int(sum(arr.size for arr in self.all_params().values()))


class _Branch:
    """One fusion branch: a frozen (by default) pretrained trunk plus a
    trainable adapter ending in the activation used as F_i."""

    def __init__(self, trunk: list[Layer], adapter: list[Layer], input_shape,
                 frozen: bool, name: str):
        self.trunk = trunk
        self.adapter = adapter
        self.input_shape = tuple(input_shape)
        self.frozen = frozen
        self.name = name


class FusionNet:
    """Multi-branch intermediate fusion: per-branch adapters, concatenated,
    then a shared classifier head.

    Branch trunks are copies of trained encoders cut at their tap; frozen
    trunks run in eval mode and receive no updates. Adapter outputs are the
    per-branch feature activations exposed to the complementarity-aware loss.
    """

    def __init__(self, branches: list[_Branch], head: list[Layer], seed: int,
                 name: str = "fusion", build_head: bool = True):
        self.branches = branches
        self.head = head  # first head layer must be Concat
        self.seed = seed
        self.name = name
        self.concat = head[0]
        if not isinstance(self.concat, Concat):
            raise BuildError("fusion head must start with a Concat layer")

    @property
    def input_shapes(self) -> list[tuple]:
        return [b.input_shape for b in self.branches]

    # -- parameters -----------------------------------------------------------
    def all_params(self) -> dict[str, np.ndarray]:
        out = {}
        for b in self.branches:
            for i, layer in enumerate(b.trunk):
                for pname, arr in layer.params.items():
                    out[f"{b.name}.trunk.{i}.{layer.name}.{pname}"] = arr
            for i, layer in enumerate(b.adapter):
                for pname, arr in layer.params.items():
                    out[f"{b.name}.adapter.{i}.{layer.name}.{pname}"] = arr
        for i, layer in enumerate(self.head):
            for pname, arr in layer.params.items():
                out[f"head.{i}.{layer.name}.{pname}"] = arr
        return out

    def trainable_params(self) -> dict[str, np.ndarray]:
        out = {}
        for path, arr in self.all_params().items():
            branch = next((b for b in self.branches if path.startswith(f"{b.name}.trunk.")), None)
            if branch is not None and branch.frozen:
                continue
            out[path] = arr
        return out

    def set_params(self, values: dict[str, np.ndarray]) -> None:
        own = self.all_params()
        for path, arr in values.items():
            if path not in own:
                raise StateError(f"unknown parameter {path!r}")
            np.copyto(own[path], arr)

    def reg_loss(self) -> float:
        total = 0.0
        for b in self.branches:
            total += sum(l.reg_loss() for l in b.trunk)
            total += sum(l.reg_loss() for l in b.adapter)
        total += sum(l.reg_loss() for l in self.head)
        return total

    # -- compute ----------------------------------------------------------------
    def forward(self, xs: list[np.ndarray], training: bool = False, rng=None):
        if len(xs) != len(self.branches):
            raise ShapeError(f"{self.name}: expected {len(self.branches)} inputs, got {len(xs)}")
        features = []
        branch_caches = []
        for b, x in zip(self.branches, xs):
            x = np.asarray(x, dtype=float)
            if x.shape[1:] != b.input_shape:
                raise ShapeError(f"{self.name}.{b.name}: expected {b.input_shape}, got {x.shape[1:]}")
            # Frozen trunks run in eval mode (running stats, no dropout).
            trunk_training = training and not b.frozen
            out = x
            t_caches = []
            for layer in b.trunk:
                out, cache = layer.forward(out, training=trunk_training, rng=rng)
                t_caches.append(cache)
            a_caches = []
            for layer in b.adapter:
                out, cache = layer.forward(out, training=training, rng=rng)
                a_caches.append(cache)
            features.append(out)
            branch_caches.append((t_caches, a_caches))

        cat, cat_cache = self.concat.forward(features, training=training, rng=rng)
        head_caches = [cat_cache]
        out = cat
        for layer in self.head[1:]:
            out, cache = layer.forward(out, training=training, rng=rng)
            head_caches.append(cache)
        return out, (branch_caches, head_caches, features)

    def predict_probs(self, xs) -> np.ndarray:
        out, _ = self.forward(xs, training=False)
        return out

    def predict(self, xs) -> np.ndarray:
        return self.predict_probs(xs).argmax(axis=1)

    def adapter_outputs(self, caches) -> list[np.ndarray]:
        return caches[2]

    def backward_from_logits(self, dlogits, caches, extra_feature_grads=None):
        """Reverse pass; ``extra_feature_grads`` (one per branch, or None)
        inject the complementarity-penalty gradients at the adapter outputs."""
        branch_caches, head_caches, _features = caches
        if not isinstance(self.head[-1], Softmax):
            raise StateError(f"{self.name}: final layer is not Softmax")
        grads: dict[str, np.ndarray] = {}
        dout = dlogits
        for i in range(len(self.head) - 2, 0, -1):
            layer = self.head[i]
            dout, layer_grads = layer.backward(dout, head_caches[i])
            for pname, g in layer_grads.items():
                grads[f"head.{i}.{layer.name}.{pname}"] = g
        dfeatures, _ = self.concat.backward(dout, head_caches[0])

        for bi, (b, (t_caches, a_caches)) in enumerate(zip(self.branches, branch_caches)):
            dfeat = dfeatures[bi]
            if extra_feature_grads is not None and extra_feature_grads[bi] is not None:
                dfeat = dfeat + extra_feature_grads[bi]
            dout = dfeat
            for i in range(len(b.adapter) - 1, -1, -1):
                layer = b.adapter[i]
                dout, layer_grads = layer.backward(dout, a_caches[i])
                for pname, g in layer_grads.items():
                    grads[f"{b.name}.adapter.{i}.{layer.name}.{pname}"] = g
            if not b.frozen:
                for i in range(len(b.trunk) - 1, -1, -1):
                    layer = b.trunk[i]
                    dout, layer_grads = layer.backward(dout, t_caches[i])
                    for pname, g in layer_grads.items():
                        grads[f"{b.name}.trunk.{i}.{layer.name}.{pname}"] = g
        return grads

    # -- manifest ---------------------------------------------------------------
    def spec(self) -> dict:
        return {
            "type": "FusionNet",
            "name": self.name,
            "seed": self.seed,
            "branches": [
                {
                    "name": b.name,
                    "frozen": b.frozen,
                    "input_shape": list(b.input_shape),
                    "trunk": [l.spec() for l in b.trunk],
                    "adapter": [l.spec() for l in b.adapter],
                }
                for b in self.branches
            ],
            "head": [l.spec() for l in self.head],
        }

    def param_count(self) -> int:
        return int(sum(arr.size for arr in self.all_params().values()))


def _build_layer_list(specs: list[dict], input_shape, rng) -> tuple[list[Layer], tuple]:
    layers = []
    shape = tuple(input_shape)
    for spec in specs:
        layer = layer_from_spec(spec)
        shape = layer.build(shape, rng)
        layers.append(layer)
    return layers, shape


def net_from_spec(spec: dict):
    """Reconstruct an (initialized) net from its manifest; parameters are
    re-initialized and should be overwritten by the persisted values."""
    if spec["type"] == "Sequential":
        layers = [layer_from_spec(s) for s in spec["layers"]]
        return Sequential(layers, tuple(spec["input_shape"]), seed=spec["seed"],
                          name=spec["name"], tap=spec.get("tap"))
    if spec["type"] == "FusionNet":
        rng = rng_for(spec["seed"], "init", spec["name"])
        branches = []
        for bs in spec["branches"]:
            trunk, shape = _build_layer_list(bs["trunk"], bs["input_shape"], rng)
            adapter, _ = _build_layer_list(bs["adapter"], shape, rng)
            branches.append(_Branch(trunk, adapter, tuple(bs["input_shape"]),
                                    bs["frozen"], bs["name"]))
        head_specs = spec["head"]
        head = [layer_from_spec(head_specs[0])]
        cat_width = sum(b.adapter[-1].out_shape[-1] if b.adapter[-1].out_shape else 0
                        for b in branches)
        # Concat carries no params; build the rest of the head from its width.
        shape = (cat_width,)
        for s in head_specs[1:]:
            layer = layer_from_spec(s)
            shape = layer.build(shape, rng)
            head.append(layer)
        return FusionNet(branches, head, seed=spec["seed"], name=spec["name"])
    raise BuildError(f"unknown net type {spec['type']!r}")
