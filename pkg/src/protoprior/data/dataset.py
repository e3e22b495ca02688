"""In-memory dataset plus the directory/manifest on-disk format.

Layout::

    root/
      manifest.csv            path,class_id,partition[,x,y,w,h]
      images/<class_id>/<n>.png
      prototypes/<class_id>.png
      prototypes.csv          class_id,path   (optional)
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from ..errors import BadCrop, InvalidConfig, MissingFile, UnknownPartition
from ..imaging import from_uint8, resize, to_uint8

PARTITIONS = ("train", "val", "test")


@dataclass
class Dataset:
    images: np.ndarray  # (N, H, W, C) float32 in [0, 1]
    labels: np.ndarray  # (N,) indices into class_ids
    class_ids: tuple
    partitions: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.class_ids = tuple(self.class_ids)
        self.labels = np.asarray(self.labels, dtype=np.intp)
        n = len(self.labels)
        if len(self.images) != n:
            raise InvalidConfig("images and labels differ in length")
        if n and (self.labels.min() < 0 or self.labels.max() >= len(self.class_ids)):
            raise InvalidConfig("label outside class_ids")
        seen = np.zeros(n, dtype=bool)
        for name, idx in self.partitions.items():
            if name not in PARTITIONS:
                raise UnknownPartition(f"unknown partition {name!r}")
            idx = np.asarray(idx, dtype=np.intp)
            if len(idx) and (idx.min() < 0 or idx.max() >= n):
                raise InvalidConfig(f"partition {name} index out of range")
            if seen[idx].any() or len(np.unique(idx)) != len(idx):
                raise InvalidConfig("partitions overlap")
            seen[idx] = True
            self.partitions[name] = idx

    def __len__(self):
        return len(self.labels)

    def select(self, partition: str, class_ids=None):
        """Images and labels of ``partition`` restricted to ``class_ids``.

        Labels are re-indexed to positions in ``class_ids`` (default: all
        classes in dataset order).
        """
        idx = self.partitions.get(partition, np.zeros(0, dtype=np.intp))
        if class_ids is None:
            return self.images[idx], self.labels[idx]
        pos = {c: i for i, c in enumerate(class_ids)}
        remap = np.array([pos.get(c, -1) for c in self.class_ids], dtype=np.intp)
        lab = remap[self.labels[idx]]
        keep = lab >= 0
        return self.images[idx[keep]], lab[keep]


def _partition_of(dataset: Dataset) -> np.ndarray:
    part = np.full(len(dataset), "", dtype=object)
    for name, idx in dataset.partitions.items():
        part[idx] = name
    return part


def save_image(path: Path, image: np.ndarray) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    px = to_uint8(image)
    if px.ndim == 3 and px.shape[2] == 1:
        px = px[:, :, 0]
    Image.fromarray(px).save(path, format="PNG", optimize=False)


def save_directory(dataset: Dataset, root, templates=None) -> Path:
    """Write ``dataset`` (and optional ``(class_id, image)`` templates) under ``root``."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    part = _partition_of(dataset)
    counters: dict = {}
    rows = []
    for i in range(len(dataset)):
        cid = dataset.class_ids[dataset.labels[i]]
        n = counters.get(cid, 0)
        counters[cid] = n + 1
        rel = f"images/{cid}/{n}.png"
        save_image(root / rel, dataset.images[i])
        rows.append((rel, cid, part[i]))
    _write_csv(root / "manifest.csv", ["path", "class_id", "partition"], rows)
    if templates is not None:
        proto_rows = []
        for cid, img in templates:
            rel = f"prototypes/{cid}.png"
            save_image(root / rel, img)
            proto_rows.append((cid, rel))
        _write_csv(root / "prototypes.csv", ["class_id", "path"], proto_rows)
    return root


def _write_csv(path: Path, header, rows):
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    os.replace(tmp, path)


def read_image(path, grayscale=True) -> np.ndarray:
    path = Path(path)
    if not path.is_file():
        raise MissingFile(f"no such image: {path}")
    with Image.open(path) as im:
        im = im.convert("L" if grayscale else "RGB")
        px = np.asarray(im)
    if px.ndim == 2:
        px = px[:, :, None]
    return from_uint8(px)


def load_directory(root, manifest="manifest.csv", image_side=48, grayscale=True) -> Dataset:
    """Load a dataset described by a CSV manifest.

    Rows may carry an ``x,y,w,h`` crop (pixels, applied before resizing).
    Classes are ordered by first appearance in the manifest.
    """
    root = Path(root)
    mpath = root / manifest
    if not mpath.is_file():
        raise MissingFile(f"no manifest at {mpath}")
    images, labels, class_ids = [], [], []
    parts = {p: [] for p in PARTITIONS}
    pos: dict = {}
    with open(mpath, newline="") as f:
        for rowno, row in enumerate(csv.DictReader(f), start=2):
            part = (row.get("partition") or "").strip()
            if part not in parts:
                raise UnknownPartition(f"{mpath}:{rowno}: unknown partition {part!r}")
            img = read_image(root / row["path"], grayscale)
            crop = [row.get(k, "") for k in ("x", "y", "w", "h")]
            if any(v not in (None, "") for v in crop):
                try:
                    x, y, w, h = (int(v) for v in crop)
                except ValueError as exc:
                    raise BadCrop(f"{mpath}:{rowno}: incomplete crop {crop}") from exc
                ih, iw = img.shape[:2]
                if x < 0 or y < 0 or w < 1 or h < 1 or x + w > iw or y + h > ih:
                    raise BadCrop(
                        f"{mpath}:{rowno}: crop {x},{y},{w},{h} outside {iw}x{ih} image {row['path']}"
                    )
                img = img[y : y + h, x : x + w]
            if img.shape[:2] != (image_side, image_side):
                img = np.clip(resize(img, image_side, image_side), 0.0, 1.0).astype(np.float32)
            cid = row["class_id"]
            if cid not in pos:
                pos[cid] = len(class_ids)
                class_ids.append(cid)
            parts[part].append(len(images))
            images.append(img)
            labels.append(pos[cid])
    channels = 1 if grayscale else 3
    stacked = np.stack(images) if images else np.zeros((0, image_side, image_side, channels), np.float32)
    return Dataset(
        images=stacked,
        labels=np.array(labels, dtype=np.intp),
        class_ids=tuple(class_ids),
        partitions={k: np.array(v, dtype=np.intp) for k, v in parts.items()},
        provenance={"directory": str(root), "manifest": manifest},
    )


def load_prototypes(root, grayscale=True, with_paths=False) -> list[tuple]:
    """Prototype images from ``prototypes.csv`` or, failing that, ``prototypes/*.png``.

    Items are ``(class_id, image)``, or ``(class_id, image, path)`` with
    ``with_paths``, the path being relative to ``root``.
    """
    root = Path(root)
    manifest = root / "prototypes.csv"
    if manifest.is_file():
        with open(manifest, newline="") as f:
            rows = [(r["class_id"], r["path"]) for r in csv.DictReader(f)]
    else:
        pdir = root / "prototypes"
        if not pdir.is_dir():
            raise MissingFile(f"no prototypes.csv or prototypes/ under {root}")
        rows = [(p.stem, p.relative_to(root).as_posix()) for p in sorted(pdir.glob("*.png"))]
    items = [(cid, read_image(root / rel, grayscale), rel) for cid, rel in rows]
    return items if with_paths else [(cid, img) for cid, img, _ in items]
