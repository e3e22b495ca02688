import math
import warnings

import numpy as np
import pytest

from protoprior.data import SynthConfig, generate_templates
from protoprior.data.synth import Corruption, corrupt
from protoprior.errors import DegeneratePrototype, DimensionMismatch, DuplicateClassId, HogConfigMismatch, KMismatch
from protoprior.hog import HogConfig
from protoprior.net import LayerSpec, build_network
from protoprior.proto import NearDuplicatePrototypeWarning, PrototypeSet, build, classify, logits, swap

SMALL_HOG = HogConfig(resize_side=40, cell_size=10)


@pytest.fixture(scope="module")
def glyphs():
    return generate_templates(SynthConfig(num_classes=5, samples_per_class=3, template_seed=21), SMALL_HOG)


def hand_set():
    r = math.sqrt(0.5)
    return PrototypeSet(("a", "b", "c"), np.array([[1.0, 0.0, r], [0.0, 1.0, r]]), HogConfig())


def linear_net(prototypes, seed=0):
    """Random fc body on a (4, 4, 1) input producing k = prototypes.k activations."""
    return build_network([LayerSpec("fc", out_dim=prototypes.k)], (4, 4, 1), prototypes=prototypes, seed=seed,
                         dtype=np.float64)


def test_build_three_glyphs(glyphs):
    ps = build(glyphs[:3], SMALL_HOG)
    np.testing.assert_allclose(np.linalg.norm(ps.matrix, axis=0), 1.0, atol=1e-6)
    gram = ps.matrix.T @ ps.matrix
    assert np.all(gram[~np.eye(3, dtype=bool)] < 0.999)
    assert ps.class_ids == tuple(c for c, _ in glyphs[:3])
    assert not ps.matrix.flags.writeable


def test_build_rejects_constant_template(glyphs):
    with pytest.raises(DegeneratePrototype):
        build([glyphs[0], ("flat", np.full((40, 40), 0.4))], SMALL_HOG)


def test_build_rejects_duplicate_ids(glyphs):
    with pytest.raises(DuplicateClassId):
        build([glyphs[0], (glyphs[0][0], glyphs[1][1])], SMALL_HOG)


def test_build_warns_on_near_duplicates(glyphs):
    cid, img = glyphs[0]
    with pytest.warns(NearDuplicatePrototypeWarning):
        build([(cid, img), ("copy", img * 0.9 + 0.05)], SMALL_HOG)


def test_build_is_order_equivariant(glyphs):
    ps = build(glyphs, SMALL_HOG)
    perm = [3, 0, 4, 2, 1]
    permuted = build([glyphs[i] for i in perm], SMALL_HOG)
    np.testing.assert_array_equal(permuted.matrix, ps.matrix[:, perm])


def test_logits_by_hand():
    ps = hand_set()
    np.testing.assert_allclose(logits(ps, np.array([0.6, 0.8])), [0.6, 0.8, 0.98995], atol=1e-5)
    assert not logits(ps, np.zeros(2)).any()
    with pytest.raises(DimensionMismatch):
        logits(ps, np.zeros(3))


def test_logits_self_similarity_wins():
    ps = hand_set()
    for j in range(3):
        assert np.argmax(logits(ps, ps.matrix[:, j])) == j


def test_swap_identity_and_permutation(glyphs):
    ps = build(glyphs, SMALL_HOG)
    net = linear_net(ps)
    x = np.random.default_rng(0).random((20, 4, 4, 1))
    base = net.predict_logits(x)
    np.testing.assert_array_equal(swap(net, ps).predict_logits(x), base)
    perm = [2, 4, 0, 1, 3]
    swapped = swap(net, ps.subset([ps.class_ids[i] for i in perm]))
    np.testing.assert_array_equal(swapped.predict_logits(x), base[:, perm])
    ids_a, _ = classify(net, x)
    ids_b, _ = classify(swapped, x)
    assert ids_a == ids_b


def test_swap_to_superset_keeps_pairwise_differences(glyphs):
    full = build(glyphs, SMALL_HOG)
    seen = full.subset(full.class_ids[:3])
    net = linear_net(seen, seed=4)
    x = np.random.default_rng(1).random((15, 4, 4, 1))
    z_seen = net.predict_logits(x)
    z_all = swap(net, full).predict_logits(x)[:, :3]
    np.testing.assert_allclose(z_all - z_all[:, :1], z_seen - z_seen[:, :1], atol=1e-12)


def test_swap_leaves_learned_layers_alone(glyphs):
    ps = build(glyphs, SMALL_HOG)
    net = linear_net(ps.subset(ps.class_ids[:2]))
    before = net.state()
    other = swap(net, ps.subset(ps.class_ids[2:]))
    assert other.class_ids == ps.class_ids[2:]
    for k, v in other.parameters().items():
        assert np.array_equal(v, before[k])


def test_swap_validation(glyphs):
    ps = build(glyphs, SMALL_HOG)
    net = linear_net(ps)
    with pytest.raises(KMismatch):
        swap(net, hand_set())
    other_cfg = HogConfig(resize_side=40, cell_size=10, signed_orientations=True)
    with pytest.raises(HogConfigMismatch):
        swap(net, build(glyphs, other_cfg))


def test_classify_single_class():
    ps = PrototypeSet(("only",), np.array([[1.0], [0.0]]), HogConfig())
    net = build_network([LayerSpec("fc", out_dim=2)], (4, 4, 1), prototypes=ps, dtype=np.float64)
    cid, probs = classify(net, np.random.default_rng(0).random((4, 4, 1)))
    assert cid == "only" and probs.tolist() == [1.0]


def test_classify_argmax_equals_cosine_argmax(glyphs):
    ps = build(glyphs, SMALL_HOG)
    net = linear_net(ps, seed=7)
    x = np.random.default_rng(3).random((100, 4, 4, 1))
    z, v = net.forward(x)
    cos = (v @ ps.matrix) / (np.linalg.norm(v, axis=1, keepdims=True) * np.linalg.norm(ps.matrix, axis=0))
    assert np.array_equal(np.argmax(z, axis=1), np.argmax(cos, axis=1))
    ids, probs = classify(net, x)
    assert ids == tuple(ps.class_ids[i] for i in np.argmax(cos, axis=1))
    np.testing.assert_allclose(probs.sum(axis=1), 1.0)


def test_trained_net_recognises_clean_prototypes(trained_desk_net):
    net, ds, templates, protos = trained_desk_net
    side = net.input_shape[0]
    clean = np.stack([corrupt(img, Corruption.none(), 0, side) for _, img in templates])
    ids, _ = classify(net, clean)
    hits = sum(pred == cid for pred, (cid, _) in zip(ids, templates))
    assert hits / len(templates) >= 0.95


def test_prototype_set_validation():
    with pytest.raises(ValueError):
        PrototypeSet(("a",), np.array([[2.0], [0.0]]), HogConfig())
    with pytest.raises(DimensionMismatch):
        PrototypeSet(("a", "b"), np.array([[1.0], [0.0]]), HogConfig())
