"""Layer implementations with explicit forward caches and hand-written backward passes.

Every layer follows the same contract:

    out_shape = layer.build(in_shape, rng)      # allocate params, infer shape
    y, cache  = layer.forward(x, training, rng) # cache feeds backward
    dx, grads = layer.backward(dy, cache)       # grads keyed by param name

Shapes exclude the batch axis. Weight penalties (Keras-style l1*|W| + l2*W^2
on kernels only) are added to the gradients by ``backward`` and to the loss
via ``reg_loss``.
"""

from __future__ import annotations

import numpy as np

from ..errors import BuildError, ShapeError


def _he_uniform(rng, shape, fan_in):
    limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape)


def _xavier_uniform(rng, shape, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


class Layer:
    kind = "Layer"

    def __init__(self, name: str | None = None):
        self.name = name or self.kind
        self.params: dict[str, np.ndarray] = {}
        self.in_shape: tuple | None = None
        self.out_shape: tuple | None = None
        # Kernel regularization coefficients per param name.
        self.l1 = 0.0
        self.l2 = 0.0

    # -- structure ----------------------------------------------------------
    def build(self, in_shape, rng) -> tuple:
        self.in_shape = tuple(in_shape)
        self.out_shape = tuple(in_shape)
        return self.out_shape

    def hyperparams(self) -> dict:
        return {}

    def spec(self) -> dict:
        out = {"kind": self.kind, "name": self.name}
        out.update(self.hyperparams())
        return out

    def _regularized(self) -> tuple[str, ...]:
        return ()

    def reg_loss(self) -> float:
        total = 0.0
        for pname in self._regularized():
            w = self.params[pname]
            if self.l2:
                total += self.l2 * float(np.sum(w * w))
            if self.l1:
                total += self.l1 * float(np.sum(np.abs(w)))
        return total

    def _add_reg_grads(self, grads: dict) -> dict:
        for pname in self._regularized():
            w = self.params[pname]
            g = grads.get(pname)
            if g is None:
                g = np.zeros_like(w)
            if self.l2:
                g = g + 2.0 * self.l2 * w
            if self.l1:
                g = g + self.l1 * np.sign(w)
            grads[pname] = g
        return grads

    # -- compute ------------------------------------------------------------
    def forward(self, x, training=False, rng=None):
        return x, None

    def backward(self, dy, cache):
        return dy, {}


class Dense(Layer):
    kind = "Dense"

    def __init__(self, units: int, l1: float = 0.0, l2: float = 0.0, name=None):
        super().__init__(name)
        if units < 1:
            raise BuildError("Dense units must be >= 1")
        self.units = units
        self.l1, self.l2 = l1, l2

    def hyperparams(self):
        return {"units": self.units, "l1": self.l1, "l2": self.l2}

    def _regularized(self):
        return ("W",)

    def build(self, in_shape, rng):
        if len(in_shape) != 1:
            raise ShapeError(f"{self.name}: Dense expects flat input, got {in_shape}")
        d = in_shape[0]
        self.params["W"] = _he_uniform(rng, (d, self.units), fan_in=d)
        self.params["b"] = np.zeros(self.units)
        self.in_shape, self.out_shape = (d,), (self.units,)
        return self.out_shape

    def forward(self, x, training=False, rng=None):
        if x.shape[1:] != self.in_shape:
            raise ShapeError(f"{self.name}: expected {self.in_shape}, got {x.shape[1:]}")
        return x @ self.params["W"] + self.params["b"], x

    def backward(self, dy, cache):
        x = cache
        grads = {"W": x.T @ dy, "b": dy.sum(axis=0)}
        return dy @ self.params["W"].T, self._add_reg_grads(grads)


class Conv1D(Layer):
    kind = "Conv1D"

    def __init__(self, filters: int, kernel_size: int, padding: str = "same",
                 l1: float = 0.0, l2: float = 0.0, name=None):
        super().__init__(name)
        if filters < 1 or kernel_size < 1:
            raise BuildError("Conv1D filters and kernel_size must be >= 1")
        if padding not in ("same", "valid"):
            raise BuildError(f"Conv1D padding must be 'same' or 'valid', got {padding!r}")
        self.filters = filters
        self.kernel_size = kernel_size
        self.padding = padding
        self.l1, self.l2 = l1, l2

    def hyperparams(self):
        return {"filters": self.filters, "kernel_size": self.kernel_size,
                "padding": self.padding, "l1": self.l1, "l2": self.l2}

    def _regularized(self):
        return ("W",)

    def _pads(self):
        if self.padding == "same":
            left = (self.kernel_size - 1) // 2
            return left, self.kernel_size - 1 - left
        return 0, 0

    def build(self, in_shape, rng):
        if len(in_shape) != 2:
            raise ShapeError(f"{self.name}: Conv1D expects (length, channels), got {in_shape}")
        length, channels = in_shape
        left, right = self._pads()
        out_len = length + left + right - self.kernel_size + 1
        if out_len < 1:
            raise ShapeError(f"{self.name}: kernel {self.kernel_size} too large for length {length}")
        fan_in = self.kernel_size * channels
        self.params["W"] = _he_uniform(rng, (self.kernel_size, channels, self.filters), fan_in)
        self.params["b"] = np.zeros(self.filters)
        self.in_shape, self.out_shape = tuple(in_shape), (out_len, self.filters)
        return self.out_shape

    def forward(self, x, training=False, rng=None):
        if x.shape[1:] != self.in_shape:
            raise ShapeError(f"{self.name}: expected {self.in_shape}, got {x.shape[1:]}")
        left, right = self._pads()
        xp = np.pad(x, ((0, 0), (left, right), (0, 0))) if (left or right) else x
        out_len = self.out_shape[0]
        w = self.params["W"]
        out = np.zeros((x.shape[0], out_len, self.filters))
        for k in range(self.kernel_size):
            out += xp[:, k : k + out_len, :] @ w[k]
        out += self.params["b"]
        return out, xp

    def backward(self, dy, cache):
        xp = cache
        left, _right = self._pads()
        out_len = self.out_shape[0]
        w = self.params["W"]
        d_w = np.zeros_like(w)
        dxp = np.zeros_like(xp)
        for k in range(self.kernel_size):
            window = xp[:, k : k + out_len, :]
            d_w[k] = np.einsum("nlc,nlf->cf", window, dy)
            dxp[:, k : k + out_len, :] += dy @ w[k].T
        grads = {"W": d_w, "b": dy.sum(axis=(0, 1))}
        in_len = self.in_shape[0]
        dx = dxp[:, left : left + in_len, :]
        return dx, self._add_reg_grads(grads)


class Conv2D(Layer):
    kind = "Conv2D"

    def __init__(self, filters: int, kernel_size, padding: str = "same",
                 l1: float = 0.0, l2: float = 0.0, name=None):
        super().__init__(name)
        kh, kw = (kernel_size, kernel_size) if np.isscalar(kernel_size) else kernel_size
        if filters < 1 or kh < 1 or kw < 1:
            raise BuildError("Conv2D filters and kernel dims must be >= 1")
        if padding not in ("same", "valid"):
            raise BuildError(f"Conv2D padding must be 'same' or 'valid', got {padding!r}")
        self.filters = filters
        self.kh, self.kw = kh, kw
        self.padding = padding
        self.l1, self.l2 = l1, l2

    def hyperparams(self):
        return {"filters": self.filters, "kernel_size": [self.kh, self.kw],
                "padding": self.padding, "l1": self.l1, "l2": self.l2}

    def _regularized(self):
        return ("W",)

    def _pads(self):
        if self.padding == "same":
            top = (self.kh - 1) // 2
            leftp = (self.kw - 1) // 2
            return top, self.kh - 1 - top, leftp, self.kw - 1 - leftp
        return 0, 0, 0, 0

    def build(self, in_shape, rng):
        if len(in_shape) != 3:
            raise ShapeError(f"{self.name}: Conv2D expects (h, w, channels), got {in_shape}")
        h, w, channels = in_shape
        top, bottom, leftp, rightp = self._pads()
        out_h = h + top + bottom - self.kh + 1
        out_w = w + leftp + rightp - self.kw + 1
        if out_h < 1 or out_w < 1:
            raise ShapeError(f"{self.name}: kernel ({self.kh},{self.kw}) too large for input {in_shape}")
        fan_in = self.kh * self.kw * channels
        self.params["W"] = _he_uniform(rng, (self.kh, self.kw, channels, self.filters), fan_in)
        self.params["b"] = np.zeros(self.filters)
        self.in_shape, self.out_shape = tuple(in_shape), (out_h, out_w, self.filters)
        return self.out_shape

    def forward(self, x, training=False, rng=None):
        if x.shape[1:] != self.in_shape:
            raise ShapeError(f"{self.name}: expected {self.in_shape}, got {x.shape[1:]}")
        top, bottom, leftp, rightp = self._pads()
        xp = np.pad(x, ((0, 0), (top, bottom), (leftp, rightp), (0, 0))) if (top or bottom or leftp or rightp) else x
        out_h, out_w, _ = self.out_shape
        w = self.params["W"]
        out = np.zeros((x.shape[0], out_h, out_w, self.filters))
        for a in range(self.kh):
            for b in range(self.kw):
                out += xp[:, a : a + out_h, b : b + out_w, :] @ w[a, b]
        out += self.params["b"]
        return out, xp

    def backward(self, dy, cache):
        xp = cache
        top, _bottom, leftp, _rightp = self._pads()
        out_h, out_w, _ = self.out_shape
        w = self.params["W"]
        d_w = np.zeros_like(w)
        dxp = np.zeros_like(xp)
        for a in range(self.kh):
            for b in range(self.kw):
                window = xp[:, a : a + out_h, b : b + out_w, :]
                d_w[a, b] = np.einsum("nijc,nijf->cf", window, dy)
                dxp[:, a : a + out_h, b : b + out_w, :] += dy @ w[a, b].T
        grads = {"W": d_w, "b": dy.sum(axis=(0, 1, 2))}
        h, wdt, _ = self.in_shape
        dx = dxp[:, top : top + h, leftp : leftp + wdt, :]
        return dx, self._add_reg_grads(grads)


class MaxPool1D(Layer):
    kind = "MaxPool1D"

    def __init__(self, pool_size: int = 2, name=None):
        super().__init__(name)
        if pool_size < 1:
            raise BuildError("pool_size must be >= 1")
        self.pool_size = pool_size

    def hyperparams(self):
        return {"pool_size": self.pool_size}

    def build(self, in_shape, rng):
        length, channels = in_shape
        out_len = length // self.pool_size
        if out_len < 1:
            raise ShapeError(f"{self.name}: length {length} shorter than pool {self.pool_size}")
        self.in_shape, self.out_shape = tuple(in_shape), (out_len, channels)
        return self.out_shape

    def forward(self, x, training=False, rng=None):
        n = x.shape[0]
        out_len, channels = self.out_shape
        p = self.pool_size
        windows = x[:, : out_len * p, :].reshape(n, out_len, p, channels)
        arg = windows.argmax(axis=2)
        out = np.take_along_axis(windows, arg[:, :, None, :], axis=2)[:, :, 0, :]
        return out, (x.shape, arg)

    def backward(self, dy, cache):
        x_shape, arg = cache
        n = x_shape[0]
        out_len, channels = self.out_shape
        p = self.pool_size
        dwin = np.zeros((n, out_len, p, channels))
        np.put_along_axis(dwin, arg[:, :, None, :], dy[:, :, None, :], axis=2)
        dx = np.zeros(x_shape)
        dx[:, : out_len * p, :] = dwin.reshape(n, out_len * p, channels)
        return dx, {}


class MaxPool2D(Layer):
    kind = "MaxPool2D"

    def __init__(self, pool_size=(2, 2), name=None):
        super().__init__(name)
        ph, pw = (pool_size, pool_size) if np.isscalar(pool_size) else pool_size
        if ph < 1 or pw < 1:
            raise BuildError("pool dims must be >= 1")
        self.ph, self.pw = ph, pw

    def hyperparams(self):
        return {"pool_size": [self.ph, self.pw]}

    def build(self, in_shape, rng):
        h, w, channels = in_shape
        out_h, out_w = h // self.ph, w // self.pw
        if out_h < 1 or out_w < 1:
            raise ShapeError(f"{self.name}: input {in_shape} too small for pool ({self.ph},{self.pw})")
        self.in_shape, self.out_shape = tuple(in_shape), (out_h, out_w, channels)
        return self.out_shape

    def forward(self, x, training=False, rng=None):
        n = x.shape[0]
        out_h, out_w, channels = self.out_shape
        ph, pw = self.ph, self.pw
        cropped = x[:, : out_h * ph, : out_w * pw, :]
        windows = (cropped.reshape(n, out_h, ph, out_w, pw, channels)
                   .transpose(0, 1, 3, 2, 4, 5)
                   .reshape(n, out_h, out_w, ph * pw, channels))
        arg = windows.argmax(axis=3)
        out = np.take_along_axis(windows, arg[:, :, :, None, :], axis=3)[:, :, :, 0, :]
        return out, (x.shape, arg)

    def backward(self, dy, cache):
        x_shape, arg = cache
        n = x_shape[0]
        out_h, out_w, channels = self.out_shape
        ph, pw = self.ph, self.pw
        dwin = np.zeros((n, out_h, out_w, ph * pw, channels))
        np.put_along_axis(dwin, arg[:, :, :, None, :], dy[:, :, :, None, :], axis=3)
        dx = np.zeros(x_shape)
        dx[:, : out_h * ph, : out_w * pw, :] = (
            dwin.reshape(n, out_h, out_w, ph, pw, channels)
            .transpose(0, 1, 3, 2, 4, 5)
            .reshape(n, out_h * ph, out_w * pw, channels)
        )
        return dx, {}


class Flatten(Layer):
    kind = "Flatten"

    def build(self, in_shape, rng):
        self.in_shape = tuple(in_shape)
        self.out_shape = (int(np.prod(in_shape)),)
        return self.out_shape

    def forward(self, x, training=False, rng=None):
        return x.reshape(x.shape[0], -1), x.shape

    def backward(self, dy, cache):
        return dy.reshape(cache), {}


class ReLU(Layer):
    kind = "ReLU"

    def forward(self, x, training=False, rng=None):
        mask = x > 0
        return x * mask, mask

    def backward(self, dy, cache):
        return dy * cache, {}


class Softmax(Layer):
    kind = "Softmax"

    def forward(self, x, training=False, rng=None):
        shifted = x - x.max(axis=-1, keepdims=True)
        e = np.exp(shifted)
        p = e / e.sum(axis=-1, keepdims=True)
        return p, p

    def backward(self, dy, cache):
        p = cache
        return p * (dy - np.sum(dy * p, axis=-1, keepdims=True)), {}


class Dropout(Layer):
    kind = "Dropout"

    def __init__(self, rate: float, name=None):
        super().__init__(name)
        if not 0.0 <= rate < 1.0:
            raise BuildError("dropout rate must be in [0, 1)")
        self.rate = rate

    def hyperparams(self):
        return {"rate": self.rate}

    def forward(self, x, training=False, rng=None):
        if not training or self.rate == 0.0:
            return x, None
        if rng is None:
            raise ShapeError(f"{self.name}: training-mode dropout requires an rng")
        # Inverted dropout: expectation of the output equals the input.
        mask = (rng.random(x.shape) >= self.rate) / (1.0 - self.rate)
        return x * mask, mask

    def backward(self, dy, cache):
        if cache is None:
            return dy, {}
        return dy * cache, {}


class BatchNorm(Layer):
    kind = "BatchNorm"

    def __init__(self, momentum: float = 0.99, eps: float = 1e-5, name=None):
        super().__init__(name)
        self.momentum = momentum
        self.eps = eps
        self.running_mean: np.ndarray | None = None
        self.running_var: np.ndarray | None = None
        # Gradient checks disable this so probing forwards stay side-effect free.
        self.update_running = True

    def hyperparams(self):
        return {"momentum": self.momentum, "eps": self.eps}

    def build(self, in_shape, rng):
        channels = in_shape[-1]
        self.params["gamma"] = np.ones(channels)
        self.params["beta"] = np.zeros(channels)
        self.running_mean = np.zeros(channels)
        self.running_var = np.ones(channels)
        self.in_shape = self.out_shape = tuple(in_shape)
        return self.out_shape

    def _axes(self, x):
        return tuple(range(x.ndim - 1))

    def forward(self, x, training=False, rng=None):
        gamma, beta = self.params["gamma"], self.params["beta"]
        axes = self._axes(x)
        if training:
            mean = x.mean(axis=axes)
            var = x.var(axis=axes)
            if self.update_running:
                m = self.momentum
                self.running_mean = m * self.running_mean + (1 - m) * mean
                self.running_var = m * self.running_var + (1 - m) * var
            inv = 1.0 / np.sqrt(var + self.eps)
            xhat = (x - mean) * inv
            count = x.size // x.shape[-1]
            return gamma * xhat + beta, ("train", xhat, inv, count)
        inv = 1.0 / np.sqrt(self.running_var + self.eps)
        xhat = (x - self.running_mean) * inv
        return gamma * xhat + beta, ("eval", xhat, inv, None)

    def backward(self, dy, cache):
        mode, xhat, inv, count = cache
        axes = self._axes(dy)
        grads = {"gamma": (dy * xhat).sum(axis=axes), "beta": dy.sum(axis=axes)}
        dxhat = dy * self.params["gamma"]
        if mode == "eval":
            return dxhat * inv, grads
        mean_dxhat = dxhat.sum(axis=axes) / count
        mean_dxhat_xhat = (dxhat * xhat).sum(axis=axes) / count
        dx = inv * (dxhat - mean_dxhat - xhat * mean_dxhat_xhat)
        return dx, grads


class LayerNorm(Layer):
    kind = "LayerNorm"

    def __init__(self, eps: float = 1e-5, name=None):
        super().__init__(name)
        self.eps = eps

    def hyperparams(self):
        return {"eps": self.eps}

    def build(self, in_shape, rng):
        d = in_shape[-1]
        self.params["gamma"] = np.ones(d)
        self.params["beta"] = np.zeros(d)
        self.in_shape = self.out_shape = tuple(in_shape)
        return self.out_shape

    def forward(self, x, training=False, rng=None):
        mean = x.mean(axis=-1, keepdims=True)
        var = x.var(axis=-1, keepdims=True)
        inv = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mean) * inv
        return self.params["gamma"] * xhat + self.params["beta"], (xhat, inv)

    def backward(self, dy, cache):
        xhat, inv = cache
        axes = tuple(range(dy.ndim - 1))
        grads = {"gamma": (dy * xhat).sum(axis=axes), "beta": dy.sum(axis=axes)}
        dxhat = dy * self.params["gamma"]
        dx = inv * (
            dxhat
            - dxhat.mean(axis=-1, keepdims=True)
            - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
        )
        return dx, grads


class Add(Layer):
    """Elementwise sum of two inputs (residual connections)."""

    kind = "Add"

    def forward(self, xs, training=False, rng=None):
        a, b = xs
        return a + b, None

    def backward(self, dy, cache):
        return (dy, dy), {}


class Concat(Layer):
    """Concatenate a list of flat inputs along the feature axis."""

    kind = "Concat"

    def forward(self, xs, training=False, rng=None):
        widths = [x.shape[-1] for x in xs]
        return np.concatenate(xs, axis=-1), widths

    def backward(self, dy, cache):
        widths = cache
        splits = np.cumsum(widths[:-1])
        return np.split(dy, splits, axis=-1), {}


class MultiHeadAttention(Layer):
    """Self-attention with per-head query/key/value projections.

    Input (batch, T, C); each head projects to ``key_dim``; head outputs are
    concatenated and projected back to C. Projections use Xavier init.
    """

    kind = "MultiHeadAttention"

    def __init__(self, heads: int, key_dim: int, name=None):
        super().__init__(name)
        if heads < 1 or key_dim < 1:
            raise BuildError("heads and key_dim must be >= 1")
        self.heads = heads
        self.key_dim = key_dim

    def hyperparams(self):
        return {"heads": self.heads, "key_dim": self.key_dim}

    def build(self, in_shape, rng):
        if len(in_shape) != 2:
            raise ShapeError(f"{self.name}: attention expects (T, C), got {in_shape}")
        _t, c = in_shape
        h, k = self.heads, self.key_dim
        for pname in ("Wq", "Wk", "Wv"):
            self.params[pname] = _xavier_uniform(rng, (h, c, k), fan_in=c, fan_out=k)
        self.params["bq"] = np.zeros((h, k))
        self.params["bk"] = np.zeros((h, k))
        self.params["bv"] = np.zeros((h, k))
        self.params["Wo"] = _xavier_uniform(rng, (h * k, c), fan_in=h * k, fan_out=c)
        self.params["bo"] = np.zeros(c)
        self.in_shape = self.out_shape = tuple(in_shape)
        return self.out_shape

    def forward(self, x, training=False, rng=None):
        if x.shape[1:] != self.in_shape:
            raise ShapeError(f"{self.name}: expected {self.in_shape}, got {x.shape[1:]}")
        p = self.params
        q = np.einsum("ntc,hck->nhtk", x, p["Wq"]) + p["bq"][None, :, None, :]
        k = np.einsum("ntc,hck->nhtk", x, p["Wk"]) + p["bk"][None, :, None, :]
        v = np.einsum("ntc,hck->nhtk", x, p["Wv"]) + p["bv"][None, :, None, :]
        scale = 1.0 / np.sqrt(self.key_dim)
        scores = np.einsum("nhtk,nhsk->nhts", q, k) * scale
        scores -= scores.max(axis=-1, keepdims=True)
        e = np.exp(scores)
        attn = e / e.sum(axis=-1, keepdims=True)
        ctx = np.einsum("nhts,nhsk->nhtk", attn, v)
        n, t = x.shape[0], x.shape[1]
        cat = ctx.transpose(0, 2, 1, 3).reshape(n, t, self.heads * self.key_dim)
        out = cat @ p["Wo"] + p["bo"]
        return out, (x, q, k, v, attn, cat)

    def backward(self, dy, cache):
        x, q, k, v, attn, cat = cache
        p = self.params
        n, t = x.shape[0], x.shape[1]
        scale = 1.0 / np.sqrt(self.key_dim)

        grads = {
            "Wo": np.einsum("ntm,ntc->mc", cat, dy),
            "bo": dy.sum(axis=(0, 1)),
        }
        dcat = dy @ p["Wo"].T
        dctx = dcat.reshape(n, t, self.heads, self.key_dim).transpose(0, 2, 1, 3)

        dattn = np.einsum("nhtk,nhsk->nhts", dctx, v)
        dv = np.einsum("nhts,nhtk->nhsk", attn, dctx)
        dscores = attn * (dattn - np.sum(dattn * attn, axis=-1, keepdims=True))
        dscores *= scale
        dq = np.einsum("nhts,nhsk->nhtk", dscores, k)
        dk = np.einsum("nhts,nhtk->nhsk", dscores, q)

        dx = np.einsum("nhtk,hck->ntc", dq, p["Wq"])
        dx += np.einsum("nhtk,hck->ntc", dk, p["Wk"])
        dx += np.einsum("nhtk,hck->ntc", dv, p["Wv"])
        grads["Wq"] = np.einsum("ntc,nhtk->hck", x, dq)
        grads["Wk"] = np.einsum("ntc,nhtk->hck", x, dk)
        grads["Wv"] = np.einsum("ntc,nhtk->hck", x, dv)
        grads["bq"] = dq.sum(axis=(0, 2))
        grads["bk"] = dk.sum(axis=(0, 2))
        grads["bv"] = dv.sum(axis=(0, 2))
        return dx, grads


class TransformerBlock(Layer):
    """Attention block: MHA -> Add -> LayerNorm -> FFN -> Add -> LayerNorm.

    The feed-forward net is Dense(ff_dim) -> ReLU -> Dense(C). Regularization
    is deliberately not applied inside the block; it belongs to the stage
    after it.
    """

    kind = "TransformerBlock"

    def __init__(self, heads: int, key_dim: int, ff_dim: int, name=None):
        super().__init__(name)
        self.heads, self.key_dim, self.ff_dim = heads, key_dim, ff_dim
        self.mha = MultiHeadAttention(heads, key_dim, name="mha")
        self.ln1 = LayerNorm(name="ln1")
        self.ff1: Dense | None = None
        self.relu = ReLU(name="ffn_relu")
        self.ff2: Dense | None = None
        self.ln2 = LayerNorm(name="ln2")

    def hyperparams(self):
        return {"heads": self.heads, "key_dim": self.key_dim, "ff_dim": self.ff_dim}

    @property
    def sublayers(self):
        return [self.mha, self.ln1, self.ff1, self.relu, self.ff2, self.ln2]

    def build(self, in_shape, rng):
        if len(in_shape) != 2:
            raise ShapeError(f"{self.name}: transformer block expects (T, C), got {in_shape}")
        t, c = in_shape
        self.ff1 = Dense(self.ff_dim, name="ffn_in")
        self.ff2 = Dense(c, name="ffn_out")
        self.mha.build(in_shape, rng)
        self.ln1.build(in_shape, rng)
        self.ff1.build((c,), rng)
        self.relu.build((self.ff_dim,), rng)
        self.ff2.build((self.ff_dim,), rng)
        self.ln2.build(in_shape, rng)
        # Collect sublayer params under prefixed names.
        self.params = {}
        for sub in self.sublayers:
            for pname, arr in sub.params.items():
                self.params[f"{sub.name}.{pname}"] = arr
        self.in_shape = self.out_shape = (t, c)
        return self.out_shape

    def _sync_params_down(self):
        # self.params owns the arrays; push references into sublayers
        # (needed after persistence swaps the arrays).
        for sub in self.sublayers:
            for pname in sub.params:
                sub.params[pname] = self.params[f"{sub.name}.{pname}"]

    def forward(self, x, training=False, rng=None):
        self._sync_params_down()
        n, t, c = x.shape
        a, c_mha = self.mha.forward(x, training, rng)
        res1 = x + a
        h1, c_ln1 = self.ln1.forward(res1, training, rng)
        flat = h1.reshape(n * t, c)
        f1, c_ff1 = self.ff1.forward(flat, training, rng)
        f1r, c_relu = self.relu.forward(f1, training, rng)
        f2, c_ff2 = self.ff2.forward(f1r, training, rng)
        res2 = h1 + f2.reshape(n, t, c)
        out, c_ln2 = self.ln2.forward(res2, training, rng)
        return out, (x.shape, c_mha, c_ln1, c_ff1, c_relu, c_ff2, c_ln2)

    def backward(self, dy, cache):
        x_shape, c_mha, c_ln1, c_ff1, c_relu, c_ff2, c_ln2 = cache
        n, t, c = x_shape
        grads: dict[str, np.ndarray] = {}

        dres2, g_ln2 = self.ln2.backward(dy, c_ln2)
        self._merge(grads, self.ln2, g_ln2)
        dh1 = dres2.copy()
        df2 = dres2.reshape(n * t, c)
        df1r, g_ff2 = self.ff2.backward(df2, c_ff2)
        self._merge(grads, self.ff2, g_ff2)
        df1, _ = self.relu.backward(df1r, c_relu)
        dflat, g_ff1 = self.ff1.backward(df1, c_ff1)
        self._merge(grads, self.ff1, g_ff1)
        dh1 += dflat.reshape(n, t, c)

        dres1, g_ln1 = self.ln1.backward(dh1, c_ln1)
        self._merge(grads, self.ln1, g_ln1)
        dx = dres1.copy()
        da = dres1
        dx_mha, g_mha = self.mha.backward(da, c_mha)
        self._merge(grads, self.mha, g_mha)
        dx += dx_mha
        return dx, grads

    @staticmethod
    def _merge(grads, sub, sub_grads):
        for pname, g in sub_grads.items():
            grads[f"{sub.name}.{pname}"] = g


_LAYER_REGISTRY = {
    cls.kind: cls
    for cls in (Dense, Conv1D, Conv2D, MaxPool1D, MaxPool2D, Flatten, ReLU,
                Softmax, Dropout, BatchNorm, LayerNorm, MultiHeadAttention,
                TransformerBlock, Add, Concat)
}


def layer_from_spec(spec: dict) -> Layer:
    """Rebuild an unbuilt layer from its manifest entry."""
    spec = dict(spec)
    kind = spec.pop("kind")
    name = spec.pop("name", None)
    cls = _LAYER_REGISTRY.get(kind)
    if cls is None:
        raise BuildError(f"unknown layer kind {kind!r}")
    if kind in ("Conv2D", "MaxPool2D") and "kernel_size" in spec:
        spec["kernel_size"] = tuple(spec["kernel_size"])
    if kind == "MaxPool2D" and "pool_size" in spec:
        spec["pool_size"] = tuple(spec["pool_size"])
    return cls(name=name, **spec)
