import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import partition_of, reference_segment
from patchnet import postproc as P
from patchnet.errors import DimensionError, ParameterError


def test_gaussian_mask_normalised():
    for sigma in (0.0, 0.5, 0.8, 2.0):
        m = P.gaussian_mask(sigma)
        assert m[0] + 2 * sum(m[1:]) == pytest.approx(1.0)
        assert all(a >= b for a, b in zip(m, m[1:]))
    assert len(P.gaussian_mask(0.5)) == 3


def test_smooth_keeps_constants_and_mass_centre():
    c = np.full((5, 7), 42.0)
    np.testing.assert_allclose(P.smooth(c, 0.8), c)
    spike = np.zeros((9, 9))
    spike[4, 4] = 1.0
    out = P.smooth(spike, 1.0)
    assert out.sum() == pytest.approx(1.0)
    assert out[4, 4] == out.max()
    np.testing.assert_allclose(out, out.T)
    assert P.smooth(spike, 0) is spike


def test_grid_edge_count_and_order():
    img = np.random.default_rng(0).uniform(size=(3, 3, 4))
    a, b, w = P.grid_edges(img)
    H, W = 3, 4
    assert len(a) == H * (W - 1) + (H - 1) * W + 2 * (H - 1) * (W - 1)
    assert (a[0], b[0]) == (0, 1) and (a[1], b[1]) == (0, 4) and (a[2], b[2]) == (0, 5)
    assert np.all(np.diff(a) >= 0)
    np.testing.assert_allclose(w[0], np.linalg.norm(img[:, 0, 0] - img[:, 0, 1]))


def test_two_uniform_halves_give_two_segments():
    img = np.zeros((3, 10, 12), dtype=np.float32)
    img[:, :, 6:] = 1.0
    seg = P.segment(img, P.SegmentationParams(k=10, sigma=0))
    assert seg.count == 2
    assert seg.ids[0, 0] == 0 and seg.ids[0, 11] == 1
    # blurring creates two intermediate columns; a larger k absorbs them but not the gap
    assert P.segment(img, P.SegmentationParams(k=10, sigma=0.5)).count == 4
    assert P.segment(img, P.SegmentationParams(k=3000, sigma=0.5)).count == 2


def test_ids_dense_in_first_occurrence_order():
    img = np.random.default_rng(1).uniform(size=(3, 12, 12)).astype(np.float32)
    seg = P.segment(img, P.SegmentationParams(k=300))
    flat = seg.ids.reshape(-1)
    _, first = np.unique(flat, return_index=True)
    assert np.all(np.diff(first) > 0)
    assert flat.max() + 1 == seg.count


def _blocky(seed, H=16, W=16):
    rng = np.random.default_rng(seed)
    img = np.zeros((3, H, W))
    for _ in range(5):
        y0, x0 = rng.integers(0, H - 2), rng.integers(0, W - 2)
        img[:, y0:y0 + rng.integers(2, 9), x0:x0 + rng.integers(2, 9)] = rng.uniform(size=(3, 1, 1))
    img += rng.normal(0, 0.03, size=img.shape)
    return (np.rint(np.clip(img, 0, 1) * 255) / 255).astype(np.float32)


@pytest.mark.parametrize("seed", range(4))
@pytest.mark.parametrize("k", [10, 550])
def test_segment_matches_reference(seed, k):
    img = _blocky(seed)
    seg = P.segment(img, P.SegmentationParams(k=k, sigma=0.5))
    assert partition_of(seg.ids) == reference_segment(img, k, 0.5)


def test_min_size_merges_small_segments():
    img = _blocky(5, 20, 20)
    seg = P.segment(img, P.SegmentationParams(k=5, sigma=0.5, min_size=10))
    assert np.bincount(seg.ids.reshape(-1)).min() >= 10


def test_segment_errors():
    with pytest.raises(DimensionError):
        P.segment(np.zeros((1, 4, 4)))
    with pytest.raises(ParameterError):
        P.SegmentationParams(k=0)
    with pytest.raises(ParameterError):
        P.SegmentationParams(sigma=-1)


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 6), st.integers(2, 4), st.integers(0, 2**31))
def test_fused_labels_constant_on_segments(n_seg, K, seed):
    rng = np.random.default_rng(seed)
    ids = rng.integers(0, n_seg, size=(6, 7))
    _, ids = np.unique(ids, return_inverse=True)
    ids = ids.reshape(6, 7)
    seg = P.SegmentMap(ids, int(ids.max()) + 1)
    prob = rng.dirichlet(np.ones(K), size=(6, 7)).transpose(2, 0, 1)
    for method in ("mean", "vote"):
        labels = P.fuse_labels(prob, seg, method)
        for s in range(seg.count):
            assert len(np.unique(labels[ids == s])) == 1
    mean_labels = P.fuse_labels(prob, seg, "mean")
    for s in range(seg.count):
        assert mean_labels[ids == s][0] == prob[:, ids == s].mean(axis=1).argmax()


def test_mean_and_vote_can_differ():
    # two pixels weakly prefer class 0, one strongly prefers class 1
    prob = np.array([[[0.55, 0.55, 0.0]], [[0.45, 0.45, 1.0]]])
    seg = P.SegmentMap(np.zeros((1, 3), dtype=np.int64), 1)
    assert P.fuse_labels(prob, seg, "mean")[0, 0] == 1
    assert P.fuse_labels(prob, seg, "vote")[0, 0] == 0
    with pytest.raises(ValueError):
        P.fuse_labels(prob, seg, "median")
    with pytest.raises(DimensionError):
        P.fuse_labels(prob, P.SegmentMap(np.zeros((2, 3), dtype=np.int64), 1))


def test_fusion_on_aligned_segments_fixes_isolated_errors():
    truth = np.zeros((8, 8), dtype=np.int64)
    truth[:, 4:] = 1
    prob = np.stack([1.0 - truth, truth.astype(float)]) * 0.8 + 0.1
    prob[:, 2, 1] = [0.3, 0.7]  # a lone mistake
    seg = P.SegmentMap(truth.copy(), 2)
    np.testing.assert_array_equal(P.fuse_labels(prob, seg), truth)
