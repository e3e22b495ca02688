"""Histogram-of-oriented-gradients embedding of prototype images.

The extractor is deliberately plain: grayscale, bilinear resize to a square,
centred (-1, 0, 1) differences, orientation-only linear vote interpolation,
per-block L2 normalisation. Prototype embeddings are additionally scaled to
unit length so that every column of the fixed output layer has the same norm.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .errors import DegenerateImage, DegeneratePrototype, InvalidConfig
from .imaging import resize, to_grayscale


@dataclass(frozen=True)
class HogConfig:
    resize_side: int = 100
    cell_size: int = 10
    block_size: int = 2
    block_overlap: int = 1
    num_bins: int = 12
    signed_orientations: bool = False
    epsilon: float = 1e-5

    def __post_init__(self):
        s, c, b, o, n = (
            self.resize_side,
            self.cell_size,
            self.block_size,
            self.block_overlap,
            self.num_bins,
        )
        if min(s, c, b) < 1:
            raise InvalidConfig(f"resize_side, cell_size and block_size must be positive: {self}")
        if s % c != 0:
            raise InvalidConfig(f"resize_side {s} is not a multiple of cell_size {c}")
        if not b > o >= 0:
            raise InvalidConfig(f"need block_size > block_overlap >= 0, got b={b}, o={o}")
        if n < 2:
            raise InvalidConfig(f"num_bins must be >= 2, got {n}")
        if not self.epsilon > 0:
            raise InvalidConfig("epsilon must be positive")
        cells = s // c
        if cells < b or (cells - b) % (b - o) != 0:
            raise InvalidConfig(
                f"block stride {b - o} does not tile {cells} cells with blocks of {b}"
            )

    @property
    def cells_per_side(self) -> int:
        return self.resize_side // self.cell_size

    @property
    def block_stride(self) -> int:
        return self.block_size - self.block_overlap

    @property
    def blocks_per_side(self) -> int:
        return (self.cells_per_side - self.block_size) // self.block_stride + 1

    @property
    def bin_width(self) -> float:
        return (360.0 if self.signed_orientations else 180.0) / self.num_bins

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "HogConfig":
        return cls(**d)


def dimension(config: HogConfig) -> int:
    """Length of the descriptor produced under ``config``."""
    return config.blocks_per_side**2 * config.block_size**2 * config.num_bins


def gradients(gray: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    padded = np.pad(gray, 1, mode="edge")
    gx = padded[1:-1, 2:] - padded[1:-1, :-2]
    gy = padded[2:, 1:-1] - padded[:-2, 1:-1]
    return gx, gy


def cell_histograms(gray: np.ndarray, config: HogConfig) -> np.ndarray:
    """Magnitude-weighted orientation histograms, shape (cells, cells, bins).

    ``gray`` must already be ``resize_side`` square.
    """
    n = config.num_bins
    c = config.cell_size
    cells = config.cells_per_side
    gx, gy = gradients(gray)
    mag = np.hypot(gx, gy)
    period = 360.0 if config.signed_orientations else 180.0
    angle = np.mod(np.degrees(np.arctan2(gy, gx)), period)
    # bin j is centred on j * bin_width; votes split between the two nearest centres
    pos = angle / config.bin_width
    lo = np.floor(pos)
    frac = pos - lo
    lo = lo.astype(np.intp) % n
    hi = (lo + 1) % n

    rows, cols = np.indices(gray.shape)
    cell_idx = (rows // c) * cells + (cols // c)
    size = cells * cells * n
    hist = np.bincount((cell_idx * n + lo).ravel(), ((1.0 - frac) * mag).ravel(), size)
    hist += np.bincount((cell_idx * n + hi).ravel(), (frac * mag).ravel(), size)
    return hist.reshape(cells, cells, n)


def extract_raw(image: np.ndarray, config: HogConfig | None = None) -> np.ndarray:
    """Block-normalised HOG descriptor of ``image`` (not unit-scaled overall)."""
    config = config or HogConfig()
    gray = to_grayscale(image)
    if gray.shape[0] < 2 or gray.shape[1] < 2:
        raise DegenerateImage(f"image of shape {gray.shape} is smaller than 2x2")
    s = config.resize_side
    if gray.shape != (s, s):
        gray = resize(gray, s, s)
    hist = cell_histograms(gray, config)

    b = config.block_size
    stride = config.block_stride
    nb = config.blocks_per_side
    eps2 = config.epsilon**2
    out = np.empty((nb, nb, b * b * config.num_bins))
    for by in range(nb):
        for bx in range(nb):
            v = hist[by * stride : by * stride + b, bx * stride : bx * stride + b].ravel()
            out[by, bx] = v / np.sqrt(v @ v + eps2)
    return out.ravel()


def embed_prototype(image: np.ndarray, config: HogConfig | None = None) -> np.ndarray:
    """Unit-length HOG embedding of a prototype image.

    Raises DegeneratePrototype for images without any gradient, which have
    no direction to normalise.
    """
    raw = extract_raw(image, config)
    norm = np.linalg.norm(raw)
    if norm == 0.0:
        raise DegeneratePrototype("prototype image has no gradients (constant image)")
    return raw / norm
