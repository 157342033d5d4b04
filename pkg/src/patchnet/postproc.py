"""Graph-based oversegmentation and region-consistent label fusion.

The segmentation follows Felzenszwalb and Huttenlocher: Gaussian smoothing,
an 8-connected grid graph weighted by RGB Euclidean distance, and greedy
merging in nondecreasing edge order while the edge weight stays below both
components' internal difference plus ``k / size``.

Images are taken in [0, 1] and scaled to [0, 255] internally so that ``k``
keeps its customary meaning.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, ParameterError


@dataclass(frozen=True)
class SegmentationParams:
    k: float = 550.0
    sigma: float = 0.5
    min_size: int = 0

    def __post_init__(self):
        if not self.k > 0:
            raise ParameterError("k must be > 0")
        if self.sigma < 0:
            raise ParameterError("sigma must be >= 0")
        if self.min_size < 0:
            raise ParameterError("min_size must be >= 0")


@dataclass
class SegmentMap:
    ids: np.ndarray  # H x W, dense in [0, count)
    count: int


def gaussian_mask(sigma: float) -> list[float]:
    """Half of a normalised 1-D Gaussian: ``mask[i]`` weights offsets +-i."""
    sigma = max(sigma, 0.01)
    length = int(math.ceil(sigma * 4.0)) + 1
    mask = [math.exp(-0.5 * (i / sigma) ** 2) for i in range(length)]
    total = mask[0] + 2.0 * sum(mask[1:])
    return [m / total for m in mask]


def _smooth_axis(v: np.ndarray, mask, axis: int) -> np.ndarray:
    n = v.shape[axis]
    idx = np.arange(n)
    acc = mask[0] * v
    for i in range(1, len(mask)):
        lo = np.take(v, np.clip(idx - i, 0, n - 1), axis=axis)
        hi = np.take(v, np.clip(idx + i, 0, n - 1), axis=axis)
        acc = acc + mask[i] * (lo + hi)
    return acc


def smooth(channel: np.ndarray, sigma: float) -> np.ndarray:
    """Separable Gaussian blur with edge clamping (rows first, then columns)."""
    if sigma == 0:
        return channel
    mask = gaussian_mask(sigma)
    return _smooth_axis(_smooth_axis(channel, mask, 1), mask, 0)


# neighbour offsets (dy, dx): right, down, down-right, up-right
_OFFSETS = ((0, 1), (1, 0), (1, 1), (-1, 1))


def grid_edges(img: np.ndarray):
    """Edges of the 8-connected grid as (a, b, weight) arrays.

    Order is per pixel in row-major order, then right, down, down-right, up-right.
    """
    _, H, W = img.shape
    ys, xs = np.mgrid[0:H, 0:W]
    a_all, b_all, w_all, valid_all = [], [], [], []
    for dy, dx in _OFFSETS:
        ny, nx = ys + dy, xs + dx
        valid = (ny >= 0) & (ny < H) & (nx < W)
        nyc, nxc = np.clip(ny, 0, H - 1), np.clip(nx, 0, W - 1)
        d = img - img[:, nyc, nxc]
        w = np.sqrt(d[0] * d[0] + d[1] * d[1] + d[2] * d[2])
        a_all.append(ys * W + xs)
        b_all.append(nyc * W + nxc)
        w_all.append(w)
        valid_all.append(valid)
    stack = lambda arrs: np.stack([a.reshape(-1) for a in arrs], axis=1).reshape(-1)
    valid = stack(valid_all)
    return stack(a_all)[valid], stack(b_all)[valid], stack(w_all)[valid]


class DisjointSet:
    """Union-find with union by rank and path compression, tracking sizes."""

    def __init__(self, n: int):
        self.parent = list(range(n))
        self.rank = [0] * n
        self.size = [1] * n

    def find(self, x: int) -> int:
        parent = self.parent
        root = x
        while parent[root] != root:
            root = parent[root]
        while parent[x] != root:
            parent[x], x = root, parent[x]
        return root

    def union(self, a: int, b: int) -> int:
        if self.rank[a] < self.rank[b]:
            a, b = b, a
        self.parent[b] = a
        self.size[a] += self.size[b]
        if self.rank[a] == self.rank[b]:
            self.rank[a] += 1
        return a


def segment(image, params: SegmentationParams = SegmentationParams()) -> SegmentMap:
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[0] != 3 or image.size == 0:
        raise DimensionError(f"segment expects a non-empty 3 x H x W image, got {image.shape}")
    _, H, W = image.shape
    img = np.stack([smooth(c, params.sigma) for c in image.astype(np.float64) * 255.0])
    a, b, w = grid_edges(img)
    order = np.argsort(w, kind="stable")
    a, b, w = a[order].tolist(), b[order].tolist(), w[order].tolist()

    ds = DisjointSet(H * W)
    threshold = [params.k] * (H * W)
    find, k = ds.find, params.k
    for u, v, weight in zip(a, b, w):
        ru, rv = find(u), find(v)
        if ru != rv and weight <= threshold[ru] and weight <= threshold[rv]:
            r = ds.union(ru, rv)
            threshold[r] = weight + k / ds.size[r]
    if params.min_size > 0:
        for u, v in zip(a, b):
            ru, rv = find(u), find(v)
            if ru != rv and (ds.size[ru] < params.min_size or ds.size[rv] < params.min_size):
                ds.union(ru, rv)

    roots = np.fromiter((find(i) for i in range(H * W)), dtype=np.int64, count=H * W)
    _, first, inverse = np.unique(roots, return_index=True, return_inverse=True)
    # renumber by first occurrence in row-major order
    rank = np.empty(len(first), dtype=np.int64)
    rank[np.argsort(first, kind="stable")] = np.arange(len(first))
    return SegmentMap(rank[inverse].reshape(H, W), len(first))


def fuse_labels(prob, seg: SegmentMap, method: str = "mean") -> np.ndarray:
    """Give every segment one label.

    ``mean``: argmax of the segment's mean class probability.
    ``vote``: the most frequent per-pixel argmax within the segment.
    Ties go to the lowest class id.
    """
    prob = np.asarray(prob, dtype=np.float64)
    K, H, W = prob.shape
    if seg.ids.shape != (H, W):
        raise DimensionError(f"segment map {seg.ids.shape} does not match probabilities {(H, W)}")
    ids = seg.ids.reshape(-1)
    if method == "mean":
        sums = np.zeros((seg.count, K))
        np.add.at(sums, ids, prob.reshape(K, -1).T)
        counts = np.bincount(ids, minlength=seg.count)[:, None]
        seg_label = (sums / counts).argmax(axis=1)
    elif method == "vote":
        votes = np.zeros((seg.count, K), dtype=np.int64)
        np.add.at(votes, (ids, prob.reshape(K, -1).argmax(axis=0)), 1)
        seg_label = votes.argmax(axis=1)
    else:
        raise ValueError(f"unknown fusion method {method!r}")
    return seg_label[ids].reshape(H, W).astype(np.uint8)
