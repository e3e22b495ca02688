"""Layer kinds for the network engine.

Activations flow as ``(N, C, H, W)`` through the convolutional part and as
``(N, D)`` after the first fully-connected layer. Every layer caches what its
backward pass needs during a training-mode forward and drops the cache in
inference mode.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import InvalidConfig, NoForwardState, ShapeMismatch

KINDS = ("conv", "maxpool", "fc", "dropout", "activation")


@dataclass
class LayerSpec:
    """Declarative description of one layer.

    ``conv`` uses ``out_maps`` and ``kernel``; ``maxpool`` uses ``window``;
    ``fc`` uses ``out_dim``; ``dropout`` uses ``rate`` (drop probability);
    ``activation`` uses ``fn`` (``relu`` or ``tanh``).
    """

    kind: str
    out_maps: Optional[int] = None
    kernel: Optional[int] = None
    window: Optional[int] = None
    out_dim: Optional[int] = None
    rate: Optional[float] = None
    fn: Optional[str] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidConfig(f"unknown layer kind {self.kind!r}")
        required = {
            "conv": ("out_maps", "kernel"),
            "maxpool": ("window",),
            "fc": ("out_dim",),
            "dropout": ("rate",),
            "activation": ("fn",),
        }[self.kind]
        for name in required:
            if getattr(self, name) is None:
                raise InvalidConfig(f"{self.kind} layer needs {name}")
        if self.kind == "dropout" and not 0.0 <= self.rate < 1.0:
            raise InvalidConfig(f"dropout rate must be in [0, 1), got {self.rate}")
        if self.kind == "activation" and self.fn not in ACTIVATIONS:
            raise InvalidConfig(f"unknown activation {self.fn!r}")

    def to_dict(self) -> dict:
        return {k: v for k, v in asdict(self).items() if v is not None}

    @classmethod
    def from_dict(cls, d: dict) -> "LayerSpec":
        return cls(**d)


class Layer:
    kind = ""

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self._cache = None

    def forward(self, x, training=False, rng=None):
        raise NotImplementedError

    def backward(self, dout, need_input_grad=True):
        raise NotImplementedError

    def _take_cache(self):
        if self._cache is None:
            raise NoForwardState(f"{self.kind} layer has no training-mode forward state")
        return self._cache


class Conv2D(Layer):
    """Valid (unpadded), stride-1 convolution."""

    kind = "conv"

    def __init__(self, in_shape, out_maps, kernel, rng, dtype=np.float32):
        super().__init__()
        c, h, w = in_shape
        if kernel > h or kernel > w:
            raise InvalidConfig(f"kernel {kernel} does not fit input {h}x{w}")
        fan_in = c * kernel * kernel
        bound = np.sqrt(6.0 / fan_in)
        self.params["W"] = rng.uniform(-bound, bound, (out_maps, c, kernel, kernel)).astype(dtype)
        self.params["b"] = np.zeros(out_maps, dtype=dtype)
        self.kernel = kernel
        self.out_shape = (out_maps, h - kernel + 1, w - kernel + 1)

    def forward(self, x, training=False, rng=None):
        n, c, h, w = x.shape
        k = self.kernel
        _, oh, ow = self.out_shape
        win = sliding_window_view(x, (k, k), axis=(2, 3))
        cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * oh * ow, c * k * k)
        wmat = self.params["W"].reshape(self.params["W"].shape[0], -1)
        out = cols @ wmat.T + self.params["b"]
        self._cache = (cols, x.shape) if training else None
        return out.reshape(n, oh, ow, -1).transpose(0, 3, 1, 2)

    def backward(self, dout, need_input_grad=True):
        cols, in_shape = self._take_cache()
        n, c, h, w = in_shape
        f, _, oh, ow = dout.shape
        k = self.kernel
        d2 = dout.transpose(0, 2, 3, 1).reshape(-1, dout.shape[1])
        wshape = self.params["W"].shape
        self.grads["W"] = (d2.T @ cols).reshape(wshape)
        self.grads["b"] = d2.sum(axis=0)
        if not need_input_grad:
            return None
        dcols = (d2 @ self.params["W"].reshape(wshape[0], -1)).reshape(n, oh, ow, c, k, k)
        dx = np.zeros(in_shape, dtype=dout.dtype)
        for a in range(k):
            for b in range(k):
                dx[:, :, a : a + oh, b : b + ow] += dcols[:, :, :, :, a, b].transpose(0, 3, 1, 2)
        return dx


class MaxPool(Layer):
    """Non-overlapping max pooling; trailing rows/columns that do not fill a window are dropped."""

    kind = "maxpool"

    def __init__(self, in_shape, window):
        super().__init__()
        c, h, w = in_shape
        if window < 1 or window > h or window > w:
            raise InvalidConfig(f"pool window {window} does not fit input {h}x{w}")
        self.window = window
        self.out_shape = (c, h // window, w // window)

    def forward(self, x, training=False, rng=None):
        n, c, h, w = x.shape
        p = self.window
        _, oh, ow = self.out_shape
        crop = x[:, :, : oh * p, : ow * p]
        blocks = crop.reshape(n, c, oh, p, ow, p).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, oh, ow, p * p)
        idx = blocks.argmax(axis=-1)  # first occurrence on ties
        out = np.take_along_axis(blocks, idx[..., None], axis=-1)[..., 0]
        self._cache = (idx, x.shape) if training else None
        return out

    def backward(self, dout, need_input_grad=True):
        idx, in_shape = self._take_cache()
        n, c, h, w = in_shape
        p = self.window
        _, oh, ow = self.out_shape
        blocks = np.zeros((n, c, oh, ow, p * p), dtype=dout.dtype)
        np.put_along_axis(blocks, idx[..., None], dout[..., None], axis=-1)
        dx = np.zeros(in_shape, dtype=dout.dtype)
        dx[:, :, : oh * p, : ow * p] = (
            blocks.reshape(n, c, oh, ow, p, p).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, oh * p, ow * p)
        )
        return dx


class FullyConnected(Layer):
    kind = "fc"

    def __init__(self, in_shape, out_dim, rng, dtype=np.float32):
        super().__init__()
        fan_in = int(np.prod(in_shape))
        bound = np.sqrt(6.0 / fan_in)
        self.params["W"] = rng.uniform(-bound, bound, (fan_in, out_dim)).astype(dtype)
        self.params["b"] = np.zeros(out_dim, dtype=dtype)
        self.out_shape = (out_dim,)

    def forward(self, x, training=False, rng=None):
        flat = x.reshape(x.shape[0], -1)
        self._cache = (flat, x.shape) if training else None
        return flat @ self.params["W"] + self.params["b"]

    def backward(self, dout, need_input_grad=True):
        flat, in_shape = self._take_cache()
        self.grads["W"] = flat.T @ dout
        self.grads["b"] = dout.sum(axis=0)
        if not need_input_grad:
            return None
        return (dout @ self.params["W"].T).reshape(in_shape)


class Dropout(Layer):
    """Inverted dropout: surviving units are scaled by 1/(1-rate) at train time."""

    kind = "dropout"

    def __init__(self, in_shape, rate):
        super().__init__()
        self.rate = rate
        self.out_shape = tuple(in_shape)

    def forward(self, x, training=False, rng=None):
        if not training:
            self._cache = None
            return x
        if self.rate == 0.0:
            self._cache = x.dtype.type(1.0)
            return x
        if rng is None:
            raise ValueError("training-mode dropout needs a random generator")
        keep = rng.random(x.shape) >= self.rate
        mask = keep.astype(x.dtype) / x.dtype.type(1.0 - self.rate)
        self._cache = mask
        return x * mask

    def backward(self, dout, need_input_grad=True):
        return dout * self._take_cache()


def _relu(x):
    return np.maximum(x, 0)


def _relu_grad(x, y):
    return (x > 0).astype(x.dtype)


def _tanh_grad(x, y):
    return 1 - y * y


ACTIVATIONS = {"relu": (_relu, _relu_grad), "tanh": (np.tanh, _tanh_grad)}


class Activation(Layer):
    kind = "activation"

    def __init__(self, in_shape, fn):
        super().__init__()
        self.fn = fn
        self._f, self._df = ACTIVATIONS[fn]
        self.out_shape = tuple(in_shape)

    def forward(self, x, training=False, rng=None):
        y = self._f(x)
        self._cache = (x, y) if training else None
        return y

    def backward(self, dout, need_input_grad=True):
        x, y = self._take_cache()
        return dout * self._df(x, y)


def make_layer(spec: LayerSpec, in_shape: tuple, rng, dtype=np.float32) -> Layer:
    """Instantiate ``spec`` for activations of shape ``in_shape`` (without batch axis)."""
    if spec.kind in ("conv", "maxpool") and len(in_shape) != 3:
        raise ShapeMismatch(f"{spec.kind} layer needs a (C, H, W) input, got {in_shape}")
    if spec.kind == "conv":
        return Conv2D(in_shape, spec.out_maps, spec.kernel, rng, dtype)
    if spec.kind == "maxpool":
        return MaxPool(in_shape, spec.window)
    if spec.kind == "fc":
        return FullyConnected(in_shape, spec.out_dim, rng, dtype)
    if spec.kind == "dropout":
        return Dropout(in_shape, spec.rate)
    return Activation(in_shape, spec.fn)
