import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from patchnet import data as D
from patchnet.errors import BoundsError, DataError, ParameterError
from patchnet.synth import generate_synthetic_scene


def _image(H=6, W=5, seed=0, labels=None, weights=None):
    rng = np.random.default_rng(seed)
    pixels = rng.uniform(size=(3, H, W)).astype(np.float32)
    if labels is None:
        labels = rng.integers(0, 3, size=(H, W))
    return D.LabeledImage(pixels, labels, weights)


@given(st.integers(-200, 200), st.integers(1, 30))
def test_reflect_index_matches_numpy_symmetric_pad(i, n):
    # numpy's "symmetric" mode repeats the edge pixel, like reflect_index
    ref = np.pad(np.arange(n), 250, mode="symmetric")[i + 250]
    assert D.reflect_index(i, n) == ref


def test_normalized_position_corners():
    x, y = D.normalized_position([0, 9], [0, 19], 10, 20)
    np.testing.assert_allclose(x, [0, 1])
    np.testing.assert_allclose(y, [0, 1])
    x, y = D.normalized_position(0, 0, 1, 1)
    assert x == 0 and y == 0


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 9), st.integers(1, 9), st.sampled_from([1, 4, 5, 28]), st.data())
def test_extract_patch_matches_padded_slice(H, W, size, data):
    img = _image(H, W, seed=H * 10 + W)
    r, c = data.draw(st.integers(0, H - 1)), data.draw(st.integers(0, W - 1))
    padded = D.pad_image(img.pixels, size)
    assert padded.shape == (3, H + size - 1, W + size - 1)
    patch = D.extract_patch(img, r, c, size)
    np.testing.assert_array_equal(patch, padded[:, r:r + size, c:c + size])
    assert patch[:, size // 2, size // 2].tolist() == img.pixels[:, r, c].tolist()


def test_extract_patch_out_of_bounds():
    img = _image()
    with pytest.raises(BoundsError):
        D.extract_patch(img, 6, 0)
    with pytest.raises(IndexError):
        D.extract_patch(img, 0, -1)


def test_labeled_image_validation():
    with pytest.raises(DataError):
        D.LabeledImage(np.zeros((3, 4, 4)), np.zeros((4, 5)))
    with pytest.raises(DataError):
        D.LabeledImage(np.zeros((1, 4, 4)), np.zeros((4, 4)))
    with pytest.raises(DataError):
        D.LabeledImage(np.zeros((3, 4, 4)), np.zeros((4, 4)), -np.ones((4, 4)))


def test_pool_skips_unlabeled_pixels():
    labels = np.full((6, 5), D.UNLABELED)
    labels[2, 3] = 1
    labels[4, 0] = 0
    pool = D.build_training_pool([_image(labels=labels)], 50, rng=0)
    assert len(pool) == 2
    assert sorted(zip(pool.rows.tolist(), pool.cols.tolist())) == [(2, 3), (4, 0)]


def test_pool_samples_without_replacement():
    pool = D.build_training_pool([_image(8, 8)], 40, rng=1)
    coords = set(zip(pool.rows.tolist(), pool.cols.tolist()))
    assert len(pool) == 40 and len(coords) == 40


def test_pool_batch_contents():
    img = _image(7, 9, seed=2)
    pool = D.build_training_pool([img], 10, rng=3)
    patches, pos, labels, weights = pool.batch(np.arange(len(pool)))
    for j in range(len(pool)):
        r, c = pool.rows[j], pool.cols[j]
        np.testing.assert_array_equal(patches[j], D.extract_patch(img, r, c))
        assert labels[j] == img.labels[r, c]
        np.testing.assert_allclose(pos[j], [c / 8, r / 6], rtol=1e-6)
    assert np.all(weights == 1)
    sample = pool[0]
    assert sample.patch.shape == (3, 28, 28) and sample.label == labels[0]


def test_inverse_class_frequency_balances_classes():
    labels = np.zeros((10, 10), dtype=np.uint8)
    labels[:2] = 1  # 20 vs 80 pixels
    pool = D.build_training_pool([_image(10, 10, labels=labels)], 100, "inverse_class_frequency", rng=0)
    mass = {k: pool.weights[pool.labels == k].sum() for k in (0, 1)}
    assert mass[0] == pytest.approx(mass[1])
    assert pool.class_counts() == {0: 80, 1: 20}


def test_pixel_weight_map_weights_and_exclusion():
    w = np.ones((6, 5))
    w[:2] = 0
    w[5] = 3
    pool = D.build_training_pool([_image(weights=w)], 100, "pixel_weight_map", rng=0)
    assert len(pool) == 20 and pool.rows.min() >= 2
    np.testing.assert_array_equal(pool.weights, w[pool.rows, pool.cols])
    with pytest.raises(DataError):
        D.build_training_pool([_image()], 10, "pixel_weight_map")


def test_pool_is_deterministic():
    imgs = [generate_synthetic_scene("road", s, 32, 32) for s in range(2)]
    a = D.build_training_pool(imgs, 30, "pixel_weight_map", rng=7)
    b = D.build_training_pool(imgs, 30, "pixel_weight_map", rng=7)
    assert a.rows.tolist() == b.rows.tolist() and a.cols.tolist() == b.cols.tolist()


def test_birdseye_weight_map():
    w = D.birdseye_weight_map(10, 4, 3, 1.0)
    assert not w[:4].any()
    rows = w[4:, 0]
    assert np.all(np.diff(rows) < 0)  # near the horizon counts more
    assert rows.mean() == pytest.approx(1.0, rel=1e-6)
    assert rows[0] / rows[1] == pytest.approx(2.0, rel=1e-6)
    flat = D.birdseye_weight_map(10, 4, 3, 0.0)
    np.testing.assert_allclose(flat[4:], 1.0)
    with pytest.raises(ParameterError):
        D.birdseye_weight_map(10, 4, 10)


def test_save_and_load_labeled_image(tmp_path):
    img = generate_synthetic_scene("road", 3, 16, 20)
    entry = D.save_labeled_image(img, tmp_path, "scene")
    (tmp_path / "manifest.json").write_text(json.dumps([entry]))
    [loaded_entry] = D.load_manifest(tmp_path / "manifest.json")
    back = D.load_labeled_image(loaded_entry)
    np.testing.assert_array_equal(back.pixels, img.pixels)
    np.testing.assert_array_equal(back.labels, img.labels)
    np.testing.assert_array_equal(back.weight_map, img.weight_map)
    assert back.name == "scene"


@pytest.mark.parametrize("content", ["{", "{}", '[{"image": "a.ppm"}]'])
def test_bad_manifests(tmp_path, content):
    path = tmp_path / "m.json"
    path.write_text(content)
    with pytest.raises(DataError):
        D.load_manifest(path)
