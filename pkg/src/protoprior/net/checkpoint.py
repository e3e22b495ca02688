"""Checkpoint files.

A checkpoint is a magic line, one line of JSON describing the architecture,
head and tensor layout, then the tensors themselves as raw little-endian
float32 in header order. Identical parameters give identical bytes.
"""

from __future__ import annotations

import json
import os
from pathlib import Path

import numpy as np

from ..errors import CheckpointFormatError
from ..hog import HogConfig
from .layers import LayerSpec
from .network import FixedHead, LearnedHead, Network, build_body

MAGIC = b"PROTOPRIOR-CHECKPOINT\n"
FORMAT_VERSION = 1
_LE_F32 = np.dtype("<f4")


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def to_bytes(net: Network, metadata: dict | None = None) -> bytes:
    tensors = []
    for name, p in net.parameters().items():
        tensors.append((name, p))
    head = {"class_ids": list(net.class_ids)}
    if net.head.is_fixed:
        protos = net.head.prototypes
        head.update(
            type="prototype",
            hog_config=protos.hog_config.to_dict(),
            source_refs=list(protos.source_refs),
        )
        tensors.append(("head.prototypes", protos.matrix))
    else:
        head["type"] = "learned"
    header = {
        "format_version": FORMAT_VERSION,
        "input_shape": list(net.input_shape),
        "layers": [s.to_dict() for s in net.specs],
        "head": head,
        "dtype": "float32-le",
        "tensors": [{"name": n, "shape": list(t.shape)} for n, t in tensors],
        "metadata": metadata or {},
    }
    parts = [MAGIC, _dumps(header).encode() + b"\n"]
    parts += [np.ascontiguousarray(t, dtype=_LE_F32).tobytes() for _, t in tensors]
    return b"".join(parts)


def save_checkpoint(path, net: Network, metadata: dict | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(to_bytes(net, metadata))
    os.replace(tmp, path)
    return path


def from_bytes(data: bytes) -> tuple[Network, dict]:
    from ..proto import PrototypeSet

    if not data.startswith(MAGIC):
        raise CheckpointFormatError("not a protoprior checkpoint")
    end = data.index(b"\n", len(MAGIC))
    header = json.loads(data[len(MAGIC) : end])
    if header.get("format_version") != FORMAT_VERSION:
        raise CheckpointFormatError(f"unsupported checkpoint version {header.get('format_version')}")
    offset = end + 1
    arrays = {}
    for t in header["tensors"]:
        count = int(np.prod(t["shape"]))
        nbytes = count * 4
        if offset + nbytes > len(data):
            raise CheckpointFormatError(f"truncated tensor {t['name']}")
        arrays[t["name"]] = np.frombuffer(data, _LE_F32, count, offset).reshape(t["shape"]).astype(np.float32)
        offset += nbytes
    if offset != len(data):
        raise CheckpointFormatError("trailing bytes after the last tensor")

    specs = [LayerSpec.from_dict(d) for d in header["layers"]]
    input_shape = tuple(header["input_shape"])
    layers = build_body(specs, input_shape, np.random.default_rng(0), np.float32)
    h = header["head"]
    if h["type"] == "prototype":
        protos = PrototypeSet(
            tuple(h["class_ids"]),
            arrays.pop("head.prototypes").astype(np.float64),
            HogConfig.from_dict(h["hog_config"]),
            tuple(h.get("source_refs", ())),
        )
        head = FixedHead(protos, np.float32)
    else:
        embed = int(np.prod(layers[-1].out_shape)) if layers else int(np.prod(input_shape))
        head = LearnedHead(embed, h["class_ids"], np.random.default_rng(0), np.float32)
    net = Network(specs, layers, input_shape, head, np.float32)
    net.load_state(arrays)
    return net, header


def load_checkpoint(path) -> tuple[Network, dict]:
    path = Path(path)
    return from_bytes(path.read_bytes())
