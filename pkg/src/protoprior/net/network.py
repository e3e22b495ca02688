"""Network container, output heads, softmax and the negative log-likelihood loss."""

from __future__ import annotations

import numpy as np

from ..errors import KMismatch, NoForwardState, ShapeMismatch
from .layers import Layer, LayerSpec, make_layer


def softmax(z: np.ndarray) -> np.ndarray:
    """Softmax along the last axis, max-subtracted for stability."""
    z = np.asarray(z)
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def nll_loss(probabilities: np.ndarray, label) -> float | np.ndarray:
    """-log p[label]; for a batch pass an (N, C) array and an (N,) label array."""
    p = np.asarray(probabilities)
    if p.ndim == 1:
        return float(-np.log(max(float(p[label]), 1e-12)))
    picked = p[np.arange(p.shape[0]), np.asarray(label)]
    return -np.log(np.maximum(picked, 1e-12))


def softmax_nll(logits: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray, np.ndarray]:
    """Mean loss over the batch, its gradient wrt the logits, and the probabilities."""
    probs = softmax(logits)
    n = logits.shape[0]
    loss = float(nll_loss(probs, labels).mean())
    grad = probs.copy()
    grad[np.arange(n), labels] -= 1
    grad /= n
    return loss, grad, probs


def argmax_lowest(a: np.ndarray, axis=-1) -> np.ndarray:
    # np.argmax already returns the first maximal index
    return np.argmax(a, axis=axis)


class LearnedHead:
    """Ordinary trainable fully-connected output layer with bias."""

    is_fixed = False

    def __init__(self, in_dim: int, class_ids, rng, dtype=np.float32):
        self.class_ids = tuple(class_ids)
        c = len(self.class_ids)
        bound = np.sqrt(6.0 / in_dim)
        self.params = {
            "W": rng.uniform(-bound, bound, (in_dim, c)).astype(dtype),
            "b": np.zeros(c, dtype=dtype),
        }
        self.grads: dict[str, np.ndarray] = {}
        self.in_dim = in_dim
        self._v = None

    def forward(self, v, training=False):
        self._v = v if training else None
        return v @ self.params["W"] + self.params["b"]

    def backward(self, dz):
        if self._v is None:
            raise NoForwardState("learned head has no training-mode forward state")
        self.grads["W"] = self._v.T @ dz
        self.grads["b"] = dz.sum(axis=0)
        return dz @ self.params["W"].T


class FixedHead:
    """Output layer whose k x C weights are a fixed prototype matrix.

    ``prototypes`` is any object exposing ``matrix`` (k x C) and
    ``class_ids``. The matrix is never written to; the head keeps a cast copy
    in the network's working precision.
    """

    is_fixed = True

    def __init__(self, prototypes, dtype=np.float32):
        self.prototypes = prototypes
        self.class_ids = tuple(prototypes.class_ids)
        self.in_dim = prototypes.matrix.shape[0]
        self.weights = np.array(prototypes.matrix, dtype=dtype)
        self.weights.flags.writeable = False
        # one contiguous vector per class: a class's logit never depends on
        # where its column sits, so reordering or extending the set is exact
        self._columns = [np.ascontiguousarray(self.weights[:, c]) for c in range(self.weights.shape[1])]
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}

    def forward(self, v, training=False):
        v = np.ascontiguousarray(v)
        if not self._columns:
            return np.zeros((v.shape[0], 0), dtype=v.dtype)
        return np.stack([v @ col for col in self._columns], axis=1)

    def backward(self, dz):
        return dz @ self.weights.T


class Network:
    """An ordered stack of layers (the learnable mapping) followed by an output head."""

    def __init__(self, specs, layers, input_shape, head, dtype=np.float32):
        self.specs = list(specs)
        self.layers: list[Layer] = list(layers)
        self.input_shape = tuple(input_shape)
        self.dtype = np.dtype(dtype)
        self.embed_dim = int(np.prod(self._out_shape()))
        self.head = None
        self.set_head(head)
        self.training = False
        self._has_forward_state = False

    def _out_shape(self):
        if self.layers:
            return self.layers[-1].out_shape
        h, w, c = self.input_shape
        return (c, h, w)

    def set_head(self, head):
        if head.in_dim != self.embed_dim:
            raise KMismatch(
                f"head expects {head.in_dim}-dim input but the network produces {self.embed_dim}"
            )
        self.head = head

    @property
    def class_ids(self) -> tuple:
        return self.head.class_ids

    def _prepare(self, images):
        x = np.asarray(images)
        single = x.ndim == len(self.input_shape)
        if single:
            x = x[None]
        if tuple(x.shape[1:]) != self.input_shape:
            raise ShapeMismatch(f"expected images of shape {self.input_shape}, got {x.shape[1:]}")
        return x.transpose(0, 3, 1, 2).astype(self.dtype, copy=False), single

    def forward(self, images, training=False, rng=None):
        """Return ``(logits, penultimate)`` for one image ``(H, W, C)`` or a batch ``(N, H, W, C)``."""
        x, single = self._prepare(images)
        for layer in self.layers:
            x = layer.forward(x, training=training, rng=rng)
        v = x.reshape(x.shape[0], -1)
        z = self.head.forward(v, training=training)
        self._has_forward_state = training
        if single:
            return z[0], v[0]
        return z, v

    def embed(self, images, batch_size=256):
        """Inference-mode penultimate activations for a batch, in chunks."""
        images = np.asarray(images)
        out = [self.forward(images[i : i + batch_size])[1] for i in range(0, len(images), batch_size)]
        return np.concatenate(out) if out else np.zeros((0, self.embed_dim), self.dtype)

    def predict_logits(self, images, batch_size=256):
        v = self.embed(images, batch_size)
        return self.head.forward(v)

    def backward(self, dlogits) -> dict[str, np.ndarray]:
        """Gradients of every learnable parameter given d(loss)/d(logits).

        The fixed prototype head contributes no entries.
        """
        if not self._has_forward_state:
            raise NoForwardState("backward needs a preceding training-mode forward pass")
        dz = np.asarray(dlogits, dtype=self.dtype)
        if dz.ndim == 1:
            dz = dz[None]
        grads = {}
        dx = self.head.backward(dz)
        for name, g in self.head.grads.items():
            grads[f"head.{name}"] = g
        dx = dx.reshape((dx.shape[0],) + tuple(self._out_shape()))
        for i in range(len(self.layers) - 1, -1, -1):
            layer = self.layers[i]
            dx = layer.backward(dx, need_input_grad=i > 0)
            for name, g in layer.grads.items():
                grads[f"{i}.{name}"] = g
        return grads

    def parameters(self) -> dict[str, np.ndarray]:
        """Live references to every learnable array, keyed like ``backward``'s output."""
        params = {}
        for i, layer in enumerate(self.layers):
            for name, p in layer.params.items():
                params[f"{i}.{name}"] = p
        for name, p in self.head.params.items():
            params[f"head.{name}"] = p
        return params

    def state(self) -> dict[str, np.ndarray]:
        return {name: p.copy() for name, p in self.parameters().items()}

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        params = self.parameters()
        if set(params) != set(state):
            raise ShapeMismatch("state keys do not match the network's parameters")
        for name, p in params.items():
            if p.shape != state[name].shape:
                raise ShapeMismatch(f"{name}: expected {p.shape}, got {state[name].shape}")
            p[...] = state[name]

    def with_head(self, head) -> "Network":
        """A new Network sharing this one's layers but using ``head``."""
        other = Network.__new__(Network)
        other.specs = self.specs
        other.layers = self.layers
        other.input_shape = self.input_shape
        other.dtype = self.dtype
        other.embed_dim = self.embed_dim
        other.head = None
        other.set_head(head)
        other.training = False
        other._has_forward_state = False
        return other


def build_body(specs, input_shape, rng, dtype=np.float32) -> list[Layer]:
    h, w, c = input_shape
    shape = (c, h, w)
    layers = []
    for spec in specs:
        if not isinstance(spec, LayerSpec):
            spec = LayerSpec.from_dict(spec)
        layer = make_layer(spec, shape, rng, dtype)
        layers.append(layer)
        shape = layer.out_shape
    return layers


def build_network(
    specs,
    input_shape,
    *,
    prototypes=None,
    class_ids=None,
    seed: int = 0,
    dtype=np.float32,
) -> Network:
    """Create a freshly initialised network.

    Pass ``prototypes`` (anything with ``matrix`` and ``class_ids``) for a
    fixed prototype head, or ``class_ids`` for a learned fully-connected head.
    """
    specs = [s if isinstance(s, LayerSpec) else LayerSpec.from_dict(s) for s in specs]
    rng = np.random.default_rng(seed)
    layers = build_body(specs, input_shape, rng, dtype)
    embed_dim = int(np.prod(layers[-1].out_shape)) if layers else int(np.prod(input_shape))
    if prototypes is not None:
        head = FixedHead(prototypes, dtype)
    elif class_ids is not None:
        head = LearnedHead(embed_dim, class_ids, rng, dtype)
    else:
        raise ValueError("build_network needs either prototypes or class_ids")
    return Network(specs, layers, input_shape, head, dtype)
