"""Presets and the glue between datasets, prototype sets and networks."""

from __future__ import annotations

import copy
import json
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import InvalidConfig
from .hog import HogConfig, dimension
from .net import LayerSpec, Network, TrainSchedule, build_network, train
from .net.train import evaluate
from .proto import PrototypeSet, build

PRESETS = ("desk", "paper-ref")
DROPOUT_PRESETS = (0.5, 0.6, 0.65)


def load_preset(name_or_path: str) -> dict:
    """A bundled preset by name, or any JSON file with the same layout."""
    if name_or_path in PRESETS:
        text = resources.files("protoprior").joinpath(f"presets/{name_or_path}.json").read_text()
    else:
        path = Path(name_or_path)
        if not path.is_file():
            raise InvalidConfig(f"unknown preset {name_or_path!r} (choose from {PRESETS} or a JSON file)")
        text = path.read_text()
    preset = json.loads(text)
    for key in ("hog", "layers"):
        if key not in preset:
            raise InvalidConfig(f"preset is missing {key!r}")
    return preset


def preset_hog(preset: dict) -> HogConfig:
    return HogConfig.from_dict(preset["hog"])


def resolve_layers(preset: dict, dropout: float | None = None) -> list[LayerSpec]:
    """Layer specs with the embedding width ``"k"`` filled in from the HOG config."""
    k = dimension(preset_hog(preset))
    specs = []
    for d in preset["layers"]:
        d = dict(d)
        if d.get("out_dim") == "k":
            d["out_dim"] = k
        if d["kind"] == "dropout" and dropout is not None:
            d["rate"] = dropout
        specs.append(LayerSpec.from_dict(d))
    if not specs or specs[-1].kind != "fc" or specs[-1].out_dim != k:
        raise InvalidConfig("a preset must end with a fully-connected layer of width k")
    return specs


def preset_schedule(preset: dict, **overrides) -> TrainSchedule:
    params = dict(preset.get("schedule", {}))
    params.update({k: v for k, v in overrides.items() if v is not None})
    return TrainSchedule(**params)


def make_network(
    preset: dict,
    input_shape,
    *,
    prototypes: PrototypeSet | None = None,
    class_ids=None,
    dropout: float | None = None,
    seed: int = 0,
    dtype=np.float32,
) -> Network:
    specs = resolve_layers(preset, dropout)
    if prototypes is not None and prototypes.hog_config != preset_hog(preset):
        raise InvalidConfig("prototype set was embedded with a different HOG config than the preset")
    return build_network(
        specs, tuple(input_shape), prototypes=prototypes, class_ids=class_ids, seed=seed, dtype=dtype
    )


def fit(net: Network, dataset, schedule: TrainSchedule, class_ids=None, log=None):
    """Train on the train partition of ``class_ids`` (default: the head's classes), validating on val."""
    class_ids = tuple(class_ids or net.class_ids)
    if class_ids != tuple(net.class_ids):
        raise InvalidConfig("class order must match the network head")
    x, y = dataset.select("train", class_ids)
    val = dataset.select("val", class_ids)
    return train(net, x, y, schedule, val=val, log=log)


def accuracy(net: Network, dataset, partition="test", class_ids=None) -> float:
    class_ids = tuple(class_ids or net.class_ids)
    x, y = dataset.select(partition, class_ids)
    if len(y) == 0:
        return float("nan")
    return evaluate(net, x, y)[1]
