import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from PIL import Image

from protoprior.data import (
    Corruption,
    Dataset,
    SynthConfig,
    build_synthetic,
    corrupt,
    generate_templates,
    load_directory,
    load_prototypes,
    save_directory,
)
from protoprior.errors import BadCrop, InvalidConfig, MissingFile, UnknownPartition
from protoprior.hog import HogConfig, embed_prototype
from protoprior.imaging import resize

GEOMETRY_ONLY = Corruption(12.0, 0.1, 3.0, 0.0, 0.0, 0.0, 0.0)


def pairwise_cosines(templates, config=None):
    m = np.stack([embed_prototype(img, config) for _, img in templates], axis=1)
    gram = m.T @ m
    return gram[~np.eye(len(templates), dtype=bool)]


def test_templates_are_deterministic():
    cfg = SynthConfig(num_classes=4, samples_per_class=3, template_seed=5)
    a = generate_templates(cfg)
    b = generate_templates(cfg)
    assert [c for c, _ in a] == [c for c, _ in b]
    for (_, x), (_, y) in zip(a, b):
        assert np.array_equal(x, y)


def test_two_templates_are_distinct():
    cos = pairwise_cosines(generate_templates(SynthConfig(num_classes=2, samples_per_class=3)))
    assert np.all(cos < 0.999)


def test_twenty_templates_seed_seven():
    templates = generate_templates(SynthConfig(num_classes=20, samples_per_class=3, template_seed=7))
    assert len(templates) == 20
    assert np.all(pairwise_cosines(templates) < 0.999)


def test_templates_are_100px_grayscale_in_unit_range():
    (_, img), = generate_templates(SynthConfig(num_classes=1, samples_per_class=3))
    assert img.shape == (100, 100, 1)
    assert img.min() >= 0 and img.max() <= 1


@pytest.fixture(scope="module")
def template():
    return generate_templates(SynthConfig(num_classes=1, samples_per_class=3, template_seed=4))[0][1]


def test_zero_corruption_is_a_plain_resize(template):
    out = corrupt(template, Corruption.none(), seed=123, image_side=48)
    assert np.array_equal(out[:, :, 0], resize(template[:, :, 0], 48))


def test_corruption_is_deterministic_per_seed(template):
    a = corrupt(template, Corruption(), seed=[1, 2, 3])
    b = corrupt(template, Corruption(), seed=[1, 2, 3])
    c = corrupt(template, Corruption(), seed=[1, 2, 4])
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_noise_deviation_statistic(template):
    # mean |clipped N(0, 0.05)| is about 0.05 * sqrt(2 / pi) = 0.0399 away from the clip bounds
    noisy = Corruption(12.0, 0.1, 3.0, 0.0, 0.0, 0.05, 0.0)
    devs = [np.abs(corrupt(template, noisy, s) - corrupt(template, GEOMETRY_ONLY, s)).mean() for s in range(1000)]
    assert 0.03 <= np.mean(devs) <= 0.05


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), noise=st.floats(0, 0.5), clutter=st.floats(0, 1),
       brightness=st.floats(0, 0.8), contrast=st.floats(0, 2))
def test_corrupted_pixels_stay_in_unit_range(template, seed, noise, clutter, brightness, contrast):
    c = Corruption(30.0, 0.3, 8.0, brightness, contrast, noise, clutter)
    out = corrupt(template, c, seed)
    assert out.shape == (48, 48, 1)
    assert out.min() >= 0.0 and out.max() <= 1.0


def test_negative_corruption_rejected():
    with pytest.raises(InvalidConfig):
        Corruption(gaussian_noise_sigma=-0.1)


def test_per_class_minimum():
    with pytest.raises(InvalidConfig):
        SynthConfig(samples_per_class=2)


def test_partitions_six_two_two():
    ds, _ = build_synthetic(SynthConfig(num_classes=3, samples_per_class=10, template_seed=1))
    for c in range(3):
        counts = [int(np.sum(ds.labels[ds.partitions[p]] == c)) for p in ("train", "val", "test")]
        assert counts == [6, 2, 2]
    everything = np.concatenate([ds.partitions[p] for p in ("train", "val", "test")])
    assert sorted(everything.tolist()) == list(range(len(ds)))


def test_full_default_size():
    ds, templates = build_synthetic(SynthConfig(num_classes=10, samples_per_class=100))
    assert len(ds) == 1000 and len(templates) == 10
    assert ds.images.shape == (1000, 48, 48, 1)
    assert ds.images.min() >= 0 and ds.images.max() <= 1


def test_directory_round_trip_is_pixel_identical(tmp_path):
    ds, templates = build_synthetic(SynthConfig(num_classes=3, samples_per_class=5, template_seed=9))
    save_directory(ds, tmp_path, templates)
    back = load_directory(tmp_path)
    assert back.class_ids == ds.class_ids
    assert np.array_equal(back.images, ds.images)
    assert np.array_equal(back.labels, ds.labels)
    for name in ("train", "val", "test"):
        assert np.array_equal(back.partitions[name], ds.partitions[name])
    protos = load_prototypes(tmp_path)
    assert [c for c, _ in protos] == [c for c, _ in templates]
    for (_, a), (_, b) in zip(protos, templates):
        assert np.array_equal(a, b)


def _write_manifest(root, rows, header=("path", "class_id", "partition", "x", "y", "w", "h")):
    with open(root / "manifest.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(header)
        w.writerows(rows)


def _png(root, name, size=(20, 30), value=100, mode="L"):
    img = Image.new(mode, size, value if mode == "L" else (value, value, value))
    img.save(root / name)
    return name


def test_single_row_manifest(tmp_path):
    _write_manifest(tmp_path, [(_png(tmp_path, "a.png"), "stop", "val", "", "", "", "")])
    ds = load_directory(tmp_path)
    assert len(ds) == 1 and ds.class_ids == ("stop",)
    assert ds.partitions["val"].tolist() == [0]
    assert ds.images.shape == (1, 48, 48, 1)
    assert ds.images.max() <= 1.0


def test_crop_then_resize(tmp_path):
    img = np.zeros((30, 20), dtype=np.uint8)
    img[5:15, 4:14] = 255
    Image.fromarray(img).save(tmp_path / "c.png")
    _write_manifest(tmp_path, [("c.png", "x", "train", 4, 5, 10, 10)])
    ds = load_directory(tmp_path, image_side=10)
    assert np.all(ds.images == 1.0)


def test_crop_outside_image_names_the_row(tmp_path):
    _write_manifest(tmp_path, [(_png(tmp_path, "a.png"), "a", "train", "", "", "", ""),
                               (_png(tmp_path, "b.png"), "b", "train", 10, 10, 15, 5)])
    with pytest.raises(BadCrop, match=":3:"):
        load_directory(tmp_path)


def test_missing_file_and_unknown_partition(tmp_path):
    _write_manifest(tmp_path, [("nope.png", "a", "train", "", "", "", "")])
    with pytest.raises(MissingFile):
        load_directory(tmp_path)
    _write_manifest(tmp_path, [(_png(tmp_path, "a.png"), "a", "holdout", "", "", "", "")])
    with pytest.raises(UnknownPartition):
        load_directory(tmp_path)


def test_rgb_files_load_as_gray_or_color(tmp_path):
    _write_manifest(tmp_path, [(_png(tmp_path, "a.png", mode="RGB", value=51), "a", "test", "", "", "", "")])
    assert load_directory(tmp_path).images.shape[-1] == 1
    color = load_directory(tmp_path, grayscale=False)
    assert color.images.shape[-1] == 3
    np.testing.assert_allclose(color.images, 0.2)


def test_43_class_manifest_with_halved_test_rows(tmp_path):
    # the original test set split evenly into validation and test halves
    _png(tmp_path, "p.png", size=(8, 8))
    rows = []
    for c in range(43):
        rows.append(("p.png", f"k{c}", "train", "", "", "", ""))
        for j in range(4):
            rows.append(("p.png", f"k{c}", "val" if j % 2 else "test", "", "", "", ""))
    _write_manifest(tmp_path, rows)
    ds = load_directory(tmp_path, image_side=8)
    assert len(ds.class_ids) == 43
    assert len(ds.partitions["val"]) == len(ds.partitions["test"]) == 86


def test_dataset_rejects_overlapping_partitions():
    with pytest.raises(InvalidConfig):
        Dataset(np.zeros((3, 2, 2, 1)), [0, 0, 0], ("a",), {"train": [0, 1], "test": [1, 2]})


def test_select_reindexes_labels():
    ds = Dataset(np.arange(4).reshape(4, 1, 1, 1).astype(np.float32), [0, 1, 2, 1], ("a", "b", "c"),
                 {"train": [0, 1, 2, 3]})
    x, y = ds.select("train", ("c", "b"))
    assert y.tolist() == [1, 0, 1]
    assert x[:, 0, 0, 0].tolist() == [1, 2, 3]
