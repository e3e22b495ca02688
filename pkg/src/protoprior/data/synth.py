"""Synthetic glyph benchmark.

Each class is a clean template built from a few anti-aliased primitives
(bars, arcs, filled triangles, rings). Samples are corrupted copies of the
template: a random similarity warp, brightness/contrast jitter, Gaussian
noise and occluding clutter patches.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from ..errors import InvalidConfig, TemplateCollisionExhausted
from ..hog import HogConfig, embed_prototype
from ..imaging import from_uint8, sample_affine, to_uint8

TEMPLATE_SIDE = 100
BACKGROUND = 0.85
INK_LEVELS = (0.1, 0.25, 0.4)
PRIMITIVES = ("bar", "arc", "triangle", "ring")
MAX_RETRIES = 100


@dataclass
class Corruption:
    rotation_max_deg: float = 12.0
    # scale drawn uniformly from [1 - scale_range, 1 + scale_range]
    scale_range: float = 0.1
    translation_max_px: float = 3.0
    brightness_jitter: float = 0.15
    contrast_jitter: float = 0.3
    gaussian_noise_sigma: float = 0.05
    background_clutter_level: float = 0.3

    def __post_init__(self):
        for name, value in asdict(self).items():
            if value < 0:
                raise InvalidConfig(f"corruption.{name} must be non-negative, got {value}")
        if self.scale_range >= 1:
            raise InvalidConfig("corruption.scale_range must be < 1")

    @classmethod
    def none(cls) -> "Corruption":
        return cls(0, 0, 0, 0, 0, 0, 0)


@dataclass
class SynthConfig:
    num_classes: int = 10
    samples_per_class: int = 100
    template_seed: int = 0
    corruption: Corruption = field(default_factory=Corruption)
    image_side: int = 48
    template_side: int = TEMPLATE_SIDE

    def __post_init__(self):
        if isinstance(self.corruption, dict):
            self.corruption = Corruption(**self.corruption)
        if self.num_classes < 1:
            raise InvalidConfig("num_classes must be >= 1")
        if self.samples_per_class < 3:
            raise InvalidConfig(
                f"samples_per_class must be >= 3 to fill train/val/test, got {self.samples_per_class}"
            )
        if self.image_side < 2 or self.template_side < 2:
            raise InvalidConfig("image sides must be >= 2")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SynthConfig":
        return cls(**d)


def class_id_for(index: int, num_classes: int) -> str:
    width = max(2, len(str(num_classes - 1)))
    return f"c{index:0{width}d}"


# --------------------------------------------------------------------------
# rendering
# --------------------------------------------------------------------------

def _coverage(dist):
    # signed distance in pixels -> anti-aliased ink coverage
    return np.clip(0.5 - dist, 0.0, 1.0)


def _sd_segment(x, y, x0, y0, x1, y1):
    dx, dy = x1 - x0, y1 - y0
    t = np.clip(((x - x0) * dx + (y - y0) * dy) / (dx * dx + dy * dy), 0.0, 1.0)
    return np.hypot(x - (x0 + t * dx), y - (y0 + t * dy))


def _draw(kind, params, x, y):
    """Signed distance field (negative inside) of one primitive."""
    if kind == "bar":
        cx, cy, length, thick, ang = params
        ux, uy = math.cos(ang) * length / 2, math.sin(ang) * length / 2
        return _sd_segment(x, y, cx - ux, cy - uy, cx + ux, cy + uy) - thick / 2
    if kind == "ring":
        cx, cy, r, thick = params
        return np.abs(np.hypot(x - cx, y - cy) - r) - thick / 2
    if kind == "arc":
        cx, cy, r, thick, start, span = params
        ring = np.abs(np.hypot(x - cx, y - cy) - r) - thick / 2
        ang = np.mod(np.arctan2(y - cy, x - cx) - start, 2 * math.pi)
        inside = ang <= span
        # outside the angular span, distance to the nearer end cap
        ex0, ey0 = cx + r * math.cos(start), cy + r * math.sin(start)
        ex1, ey1 = cx + r * math.cos(start + span), cy + r * math.sin(start + span)
        caps = np.minimum(np.hypot(x - ex0, y - ey0), np.hypot(x - ex1, y - ey1)) - thick / 2
        return np.where(inside, ring, caps)
    if kind == "triangle":
        pts = params
        d = None
        for i in range(3):
            (ax, ay), (bx, by) = pts[i], pts[(i + 1) % 3]
            # inward-facing edge normals give a (negative inside) half-plane distance
            ex, ey = bx - ax, by - ay
            norm = math.hypot(ex, ey)
            h = ((x - ax) * ey - (y - ay) * ex) / norm
            d = h if d is None else np.maximum(d, h)
        return d
    raise ValueError(kind)


def _sample_primitive(rng, side):
    kind = PRIMITIVES[int(rng.integers(len(PRIMITIVES)))]
    lo, hi = 0.2 * side, 0.8 * side
    if kind == "bar":
        params = (rng.uniform(lo, hi), rng.uniform(lo, hi), rng.uniform(0.3, 0.7) * side,
                  rng.uniform(0.05, 0.1) * side, rng.uniform(0, math.pi))
    elif kind == "ring":
        params = (rng.uniform(0.35, 0.65) * side, rng.uniform(0.35, 0.65) * side,
                  rng.uniform(0.12, 0.35) * side, rng.uniform(0.04, 0.08) * side)
    elif kind == "arc":
        params = (rng.uniform(0.35, 0.65) * side, rng.uniform(0.35, 0.65) * side,
                  rng.uniform(0.15, 0.35) * side, rng.uniform(0.05, 0.09) * side,
                  rng.uniform(0, 2 * math.pi), rng.uniform(0.5, 1.5) * math.pi)
    else:
        cx, cy = rng.uniform(0.35, 0.65, 2) * side
        r = rng.uniform(0.15, 0.3) * side
        a0 = rng.uniform(0, 2 * math.pi)
        angles = a0 + np.array([0.0, 2 * math.pi / 3, 4 * math.pi / 3]) + rng.uniform(-0.3, 0.3, 3)
        params = [(cx + r * math.cos(a), cy + r * math.sin(a)) for a in angles]
        # keep a consistent (clockwise in image coordinates) winding
        (ax, ay), (bx, by), (qx, qy) = params
        if (bx - ax) * (qy - ay) - (by - ay) * (qx - ax) < 0:
            params = params[::-1]
    ink = INK_LEVELS[int(rng.integers(len(INK_LEVELS)))]
    return kind, params, ink


def render_template(rng, side=TEMPLATE_SIDE) -> np.ndarray:
    """Draw 2-4 random primitives on a flat background, quantised to 8 bits."""
    yy, xx = np.mgrid[0:side, 0:side].astype(np.float64) + 0.5
    img = np.full((side, side), BACKGROUND)
    for _ in range(int(rng.integers(2, 5))):
        kind, params, ink = _sample_primitive(rng, side)
        cov = _coverage(_draw(kind, params, xx, yy))
        img = img * (1 - cov) + ink * cov
    return from_uint8(to_uint8(img))[:, :, None]


def generate_templates(config: SynthConfig, hog_config: HogConfig | None = None):
    """Deterministic list of ``(class_id, template)`` with pairwise-distinct HOG embeddings."""
    hog_config = hog_config or HogConfig()
    out = []
    embeddings = []
    for c in range(config.num_classes):
        for attempt in range(MAX_RETRIES):
            rng = np.random.default_rng([config.template_seed, 0, c, attempt])
            img = render_template(rng, config.template_side)
            try:
                emb = embed_prototype(img, hog_config)
            except ValueError:
                continue
            if all(float(emb @ other) < 0.999 for other in embeddings):
                break
        else:
            raise TemplateCollisionExhausted(
                f"could not draw a distinct template for class {c} in {MAX_RETRIES} attempts"
            )
        embeddings.append(emb)
        out.append((class_id_for(c, config.num_classes), img))
    return out


def corrupt(template: np.ndarray, corruption: Corruption, seed, image_side: int = 48) -> np.ndarray:
    """A noisy, warped copy of ``template`` at ``image_side`` resolution (H, W, 1)."""
    rng = np.random.default_rng(seed)
    src = np.asarray(template, dtype=np.float64)
    if src.ndim == 3:
        src = src[:, :, 0]
    c = corruption
    rot = rng.uniform(-c.rotation_max_deg, c.rotation_max_deg) if c.rotation_max_deg else 0.0
    scale = 1.0 + rng.uniform(-c.scale_range, c.scale_range) if c.scale_range else 1.0
    shift = (
        tuple(rng.uniform(-c.translation_max_px, c.translation_max_px, 2))
        if c.translation_max_px
        else (0.0, 0.0)
    )
    img = sample_affine(src, image_side, image_side, rot, scale, shift)

    if c.brightness_jitter or c.contrast_jitter:
        gain = 1.0 + rng.uniform(-c.contrast_jitter, c.contrast_jitter)
        offset = rng.uniform(-c.brightness_jitter, c.brightness_jitter)
        img = np.clip((img - 0.5) * gain + 0.5 + offset, 0.0, 1.0)
    if c.gaussian_noise_sigma:
        img = np.clip(img + rng.normal(0.0, c.gaussian_noise_sigma, img.shape), 0.0, 1.0)
    if c.background_clutter_level:
        for _ in range(int(rng.binomial(4, min(c.background_clutter_level, 1.0)))):
            h, w = rng.integers(3, max(4, image_side // 5), 2)
            y0 = int(rng.integers(0, image_side - h + 1))
            x0 = int(rng.integers(0, image_side - w + 1))
            value = rng.uniform(0.0, 1.0)
            patch = img[y0 : y0 + h, x0 : x0 + w]
            img[y0 : y0 + h, x0 : x0 + w] = 0.5 * patch + 0.5 * value
    return img[:, :, None]


def split_indices(n: int, rng) -> dict[str, np.ndarray]:
    """60/20/20 train/val/test split of ``range(n)`` (val and test get at least one each)."""
    n_val = max(1, int(round(0.2 * n)))
    n_test = max(1, int(round(0.2 * n)))
    order = rng.permutation(n)
    return {
        "train": np.sort(order[n_val + n_test :]),
        "val": np.sort(order[:n_val]),
        "test": np.sort(order[n_val : n_val + n_test]),
    }


def build_synthetic(config: SynthConfig, hog_config: HogConfig | None = None):
    """Generate the full benchmark.

    Returns ``(dataset, templates)`` where ``templates`` is the list of
    ``(class_id, image)`` prototype inputs.
    """
    from .dataset import Dataset

    templates = generate_templates(config, hog_config)
    n = config.samples_per_class
    images = []
    labels = []
    parts = {"train": [], "val": [], "test": []}
    for c, (_, tpl) in enumerate(templates):
        split = split_indices(n, np.random.default_rng([config.template_seed, 2, c]))
        for name, idx in split.items():
            parts[name].extend((c * n + idx).tolist())
        for j in range(n):
            img = corrupt(tpl, config.corruption, [config.template_seed, 1, c, j], config.image_side)
            images.append(from_uint8(to_uint8(img)))
            labels.append(c)
    dataset = Dataset(
        images=np.stack(images),
        labels=np.array(labels, dtype=np.intp),
        class_ids=tuple(cid for cid, _ in templates),
        partitions={k: np.array(sorted(v), dtype=np.intp) for k, v in parts.items()},
        provenance={"synthetic": config.to_dict()},
    )
    return dataset, templates
