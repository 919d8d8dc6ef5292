import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mmmdesign import shapes


@pytest.mark.parametrize("cls", shapes.CLASSES)
def test_representatives_are_symmetric_binary_and_nonempty(cls):
    img = shapes.class_representative(cls, 64)
    assert img.dtype == np.uint8 and set(np.unique(img)) == {0, 1}
    shapes.check_symmetry(img)


@pytest.mark.parametrize("cls", shapes.CLASSES)
def test_representative_round_trip_error(cls):
    assert shapes.reconstruction_error(shapes.class_representative(cls, 64)) <= 0.10


def test_feature_is_36_dimensional_and_real():
    z = shapes.encode(shapes.class_representative("ring", 64))
    assert z.shape == (36,) and z.dtype == np.float64


def test_encode_rejects_asymmetric_image_naming_pixel():
    img = shapes.class_representative("cross", 32)
    img[3, 5] ^= 1
    with pytest.raises(shapes.SymmetryError, match="pixel"):
        shapes.encode(img)


def test_quadrant_expansion_inverts_storage():
    rng = np.random.default_rng(0)
    q = rng.normal(size=(4, 4))
    block = shapes.expand_quadrant(q)
    assert block.shape == (7, 7)
    np.testing.assert_array_equal(block, block[::-1])
    np.testing.assert_array_equal(block, block[:, ::-1])
    np.testing.assert_array_equal(shapes.store_quadrant(block), q)


def test_encode_matches_full_centered_dft():
    img = shapes.class_representative("ibeam", 32).astype(float)
    n, m = 32, 5
    x = np.arange(n) - (n - 1) / 2
    k = np.arange(-m, m + 1)
    e = np.exp(-2j * np.pi * np.outer(k, x) / n)
    full = e @ img @ e.T
    np.testing.assert_allclose(shapes.encode(img, m), full.real[m:, m:].ravel(), atol=1e-9)


def test_decode_of_flat_feature_is_empty():
    level, img = shapes.decode(np.zeros(36), 32)
    assert np.all(level == 0.5) and not img.any()


def test_decode_range_and_threshold():
    z = shapes.encode(shapes.class_representative("ellipse", 64))
    level, img = shapes.decode(z, 48)
    assert level.min() == 0.0 and level.max() == 1.0
    np.testing.assert_array_equal(img, (level >= 0.5).astype(np.uint8))


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(0.01, 1.0), min_size=2, max_size=6))
def test_blend_is_convex_and_order_free(raw):
    w = np.array(raw) / np.sum(raw)
    w[-1] = 1.0 - w[:-1].sum()
    if abs(w.sum() - 1.0) > 1e-12 or w[-1] < 0:
        return
    reps = shapes.representative_features(64)[: len(w)]
    z = shapes.blend(reps, w)
    perm = np.arange(len(w))[::-1]
    np.testing.assert_allclose(z, shapes.blend(reps[perm], w[perm]), atol=1e-9)
    assert np.all(z <= reps.max(axis=0) + 1e-9) and np.all(z >= reps.min(axis=0) - 1e-9)


def test_blend_in_standardized_space_equals_raw_blend():
    reps = shapes.representative_features(64)[:3]
    w = [0.2, 0.3, 0.5]
    mean, std = reps.mean(axis=0) + 1.0, reps.std(axis=0) + 2.0
    np.testing.assert_allclose(shapes.blend(reps, w, mean, std), shapes.blend(reps, w), atol=1e-9)


@pytest.mark.parametrize("w", [[0.5, 0.6], [1.2, -0.2], [], [0.5, 0.5 + 1e-9]])
def test_weight_validation(w):
    with pytest.raises(ValueError):
        shapes.validate_weights(w)


def test_synthesis_is_index_addressable():
    a = shapes.synthesize_ground_set(12, seed=5)
    b = shapes.synthesize_one(7, seed=5)
    np.testing.assert_array_equal(a[7][1], b[1])
    assert a[7][0] == b[0]
    c = shapes.synthesize_ground_set(12, seed=6)
    assert not np.array_equal(a[0][1], c[0][1])


def test_synthesized_shapes_are_nondegenerate():
    for spec, z in shapes.synthesize_ground_set(30, seed=2):
        _, img = shapes.decode(z, 64)
        assert 0 < img.mean() < 1
        assert 2 <= len(spec.classes) <= 4


def test_ground_set_save_load(tmp_path, small_ground_set):
    small_ground_set.save(tmp_path)
    back = shapes.GroundSet.load(tmp_path)
    np.testing.assert_array_equal(back.features, small_ground_set.features)
    assert back.specs == small_ground_set.specs
    np.testing.assert_allclose(back.standardized().mean(axis=0), 0, atol=1e-12)


def test_blend_reconstruction_rate():
    items = shapes.synthesize_ground_set(200, seed=0)
    errs = []
    for _, z in items:
        _, img = shapes.decode(z, 64)
        errs.append(shapes.reconstruction_error(img))
    assert np.mean(np.array(errs) <= 0.05) >= 0.8
