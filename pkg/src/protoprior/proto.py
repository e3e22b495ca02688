"""Fixed prototype output layer and test-time prototype swapping."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, DuplicateClassId, HogConfigMismatch, KMismatch
from .hog import HogConfig, embed_prototype
from .net.network import FixedHead, Network, softmax

NEAR_DUPLICATE_COSINE = 0.999


class NearDuplicatePrototypeWarning(UserWarning):
    pass


@dataclass(frozen=True)
class PrototypeSet:
    """Class embeddings as the columns of a read-only k x C matrix."""

    class_ids: tuple
    matrix: np.ndarray
    hog_config: HogConfig
    source_refs: tuple = field(default=())

    def __post_init__(self):
        ids = tuple(self.class_ids)
        object.__setattr__(self, "class_ids", ids)
        if len(set(ids)) != len(ids):
            raise DuplicateClassId(f"duplicate class ids in {ids}")
        m = np.array(self.matrix, dtype=np.float64)
        if m.ndim != 2 or m.shape[1] != len(ids):
            raise DimensionMismatch(f"matrix shape {m.shape} does not match {len(ids)} classes")
        norms = np.linalg.norm(m, axis=0)
        if not np.allclose(norms, 1.0, rtol=0, atol=1e-6):
            raise ValueError("prototype columns must have unit L2 norm")
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)
        refs = tuple(self.source_refs) or tuple("" for _ in ids)
        object.__setattr__(self, "source_refs", refs)

    @property
    def k(self) -> int:
        return self.matrix.shape[0]

    def __len__(self):
        return len(self.class_ids)

    def subset(self, class_ids) -> "PrototypeSet":
        """Columns for ``class_ids``, in that order."""
        pos = {c: i for i, c in enumerate(self.class_ids)}
        cols = [pos[c] for c in class_ids]
        return PrototypeSet(
            tuple(class_ids),
            self.matrix[:, cols],
            self.hog_config,
            tuple(self.source_refs[i] for i in cols),
        )

    def column(self, class_id) -> np.ndarray:
        return self.matrix[:, self.class_ids.index(class_id)]


def check_distinct(matrix: np.ndarray, class_ids, threshold=NEAR_DUPLICATE_COSINE) -> list[tuple]:
    """Pairs of classes whose (unit) columns have cosine similarity above ``threshold``."""
    gram = matrix.T @ matrix
    i, j = np.nonzero(np.triu(gram > threshold, k=1))
    return [(class_ids[a], class_ids[b], float(gram[a, b])) for a, b in zip(i, j)]


def build(prototype_images, config: HogConfig | None = None, source_refs=None) -> PrototypeSet:
    """Embed ``(class_id, image)`` pairs into a PrototypeSet, keeping their order.

    Warns (NearDuplicatePrototypeWarning) when two classes are practically
    indistinguishable in the embedding space.
    """
    config = config or HogConfig()
    items = list(prototype_images)
    if not items:
        raise ValueError("need at least one prototype")
    ids = [cid for cid, _ in items]
    if len(set(ids)) != len(ids):
        raise DuplicateClassId(f"duplicate class ids in {ids}")
    cols = [embed_prototype(img, config) for _, img in items]
    matrix = np.stack(cols, axis=1)
    for a, b, cos in check_distinct(matrix, ids):
        warnings.warn(
            f"prototypes {a!r} and {b!r} are near duplicates (cosine {cos:.5f})",
            NearDuplicatePrototypeWarning,
            stacklevel=2,
        )
    return PrototypeSet(tuple(ids), matrix, config, tuple(source_refs or ()))


def logits(prototypes: PrototypeSet, v: np.ndarray) -> np.ndarray:
    """Inner product of ``v`` (or each row of a batch) with every prototype column."""
    v = np.asarray(v)
    if v.shape[-1] != prototypes.k:
        raise DimensionMismatch(f"vector of length {v.shape[-1]} vs k={prototypes.k}")
    return v @ prototypes.matrix


def swap(net: Network, new_set: PrototypeSet) -> Network:
    """Return a network that shares ``net``'s learned layers but scores against ``new_set``."""
    if new_set.k != net.embed_dim:
        raise KMismatch(f"prototype dimension {new_set.k} does not match network width {net.embed_dim}")
    current = getattr(net.head, "prototypes", None)
    if current is not None and current.hog_config != new_set.hog_config:
        raise HogConfigMismatch(
            f"network was built for {current.hog_config}, new prototypes use {new_set.hog_config}"
        )
    return net.with_head(FixedHead(new_set, net.dtype))


def classify(net: Network, image: np.ndarray):
    """Predicted class id and the softmax distribution for one image.

    Batches of images return a tuple of ids and an (N, C) probability array.
    """
    z, _ = net.forward(image)
    probs = softmax(z.astype(np.float64))
    idx = np.argmax(z, axis=-1)
    ids = net.class_ids
    if np.ndim(idx) == 0:
        return ids[int(idx)], probs
    return tuple(ids[i] for i in idx), probs
