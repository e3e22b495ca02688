"""Pixel-level helpers shared by the HOG extractor and the data pipeline.

Images are numpy arrays of intensities in [0, 1], shaped ``(H, W)`` for
grayscale or ``(H, W, C)`` with ``C`` in {1, 3}.
"""

from __future__ import annotations

import math

import numpy as np

GRAY_WEIGHTS = (0.299, 0.587, 0.114)


def to_grayscale(image: np.ndarray) -> np.ndarray:
    img = np.asarray(image, dtype=np.float64)
    if img.ndim == 2:
        return img
    if img.ndim == 3 and img.shape[2] == 1:
        return img[:, :, 0]
    if img.ndim == 3 and img.shape[2] in (3, 4):
        r, g, b = GRAY_WEIGHTS
        return r * img[:, :, 0] + g * img[:, :, 1] + b * img[:, :, 2]
    raise ValueError(f"cannot convert array of shape {img.shape} to grayscale")


def sample_affine(
    image: np.ndarray,
    out_h: int,
    out_w: int,
    rotation_deg: float = 0.0,
    scale: float = 1.0,
    shift: tuple[float, float] = (0.0, 0.0),
) -> np.ndarray:
    """Resample a 2-D image onto an ``out_h x out_w`` grid.

    The output grid spans the whole input (a plain resize when the other
    arguments are at their defaults). ``rotation_deg``, ``scale`` and
    ``shift`` (dx, dy in output pixels) move the content about the image
    centre. Sampling is bilinear on pixel centres with replicated borders.
    """
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 2:
        raise ValueError("sample_affine expects a 2-D array")
    in_h, in_w = img.shape
    sx = in_w / out_w
    sy = in_h / out_h

    cols = np.arange(out_w, dtype=np.float64) + 0.5 - out_w / 2.0
    rows = np.arange(out_h, dtype=np.float64) + 0.5 - out_h / 2.0
    qx = (cols[None, :] - shift[0]) / scale
    qy = (rows[:, None] - shift[1]) / scale
    theta = math.radians(rotation_deg)
    cos_t, sin_t = math.cos(theta), math.sin(theta)
    # inverse rotation maps output positions back into the source
    px = (cos_t * qx + sin_t * qy) * sx
    py = (-sin_t * qx + cos_t * qy) * sy
    src_x = in_w / 2.0 + px - 0.5
    src_y = in_h / 2.0 + py - 0.5
    return _bilinear(img, src_y, src_x)


def _bilinear(img: np.ndarray, y: np.ndarray, x: np.ndarray) -> np.ndarray:
    h, w = img.shape
    y, x = np.broadcast_arrays(y, x)
    y = np.clip(y, 0.0, h - 1.0)
    x = np.clip(x, 0.0, w - 1.0)
    y0 = np.floor(y).astype(np.intp)
    x0 = np.floor(x).astype(np.intp)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = y - y0
    fx = x - x0
    top = (1.0 - fx) * img[y0, x0] + fx * img[y0, x1]
    bottom = (1.0 - fx) * img[y1, x0] + fx * img[y1, x1]
    return (1.0 - fy) * top + fy * bottom


def resize(image: np.ndarray, out_h: int, out_w: int | None = None) -> np.ndarray:
    """Bilinear resize of a 2-D array (or per channel of a 3-D one)."""
    if out_w is None:
        out_w = out_h
    img = np.asarray(image, dtype=np.float64)
    if img.ndim == 3:
        return np.stack(
            [sample_affine(img[:, :, ch], out_h, out_w) for ch in range(img.shape[2])],
            axis=2,
        )
    return sample_affine(img, out_h, out_w)


def to_uint8(image: np.ndarray) -> np.ndarray:
    return np.round(np.clip(image, 0.0, 1.0) * 255.0).astype(np.uint8)


def from_uint8(pixels: np.ndarray) -> np.ndarray:
    return pixels.astype(np.float32) / np.float32(255.0)
