"""Slow, obviously-correct reference implementations used as test oracles."""

from fractions import Fraction
import math

import numpy as np


def naive_conv2d(x, w, b):
    """Direct valid cross-correlation in float64: out[n, f, y, x]."""
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    N, C, H, W = x.shape
    F, _, kh, kw = w.shape
    out = np.zeros((N, F, H - kh + 1, W - kw + 1))
    for n in range(N):
        for f in range(F):
            for oy in range(H - kh + 1):
                for ox in range(W - kw + 1):
                    acc = float(b[f])
                    for c in range(C):
                        for ky in range(kh):
                            for kx in range(kw):
                                acc += x[n, c, oy + ky, ox + kx] * w[f, c, ky, kx]
                    out[n, f, oy, ox] = acc
    return out


def brute_force_max_f(scores, truths, with_threshold=False):
    """Best F1 over every threshold drawn from the scores (and 0), in exact arithmetic.

    O(P^2): each candidate threshold recounts all examples. With
    ``with_threshold`` also returns the smallest threshold reaching the best F1.
    """
    scores = [float(s) for s in scores]
    truths = [bool(t) for t in truths]
    positives = sum(truths)
    best, best_t = Fraction(0), None
    for t in sorted(set(scores) | {0.0}, reverse=True):
        tp = sum(1 for s, y in zip(scores, truths) if s >= t and y)
        fp = sum(1 for s, y in zip(scores, truths) if s >= t and not y)
        fn = positives - tp
        if tp and Fraction(2 * tp, 2 * tp + fp + fn) >= best:
            best, best_t = Fraction(2 * tp, 2 * tp + fp + fn), t
    return (best, best_t) if with_threshold else best


def _gaussian(sigma):
    sigma = max(sigma, 0.01)
    n = int(math.ceil(sigma * 4.0)) + 1
    m = [math.exp(-0.5 * (i / sigma) * (i / sigma)) for i in range(n)]
    s = m[0]
    for v in m[1:]:
        s += 2.0 * v
    return [v / s for v in m]


def _blur_line(vals, mask):
    n = len(vals)
    out = []
    for j in range(n):
        acc = mask[0] * vals[j]
        for i in range(1, len(mask)):
            acc = acc + mask[i] * (vals[max(j - i, 0)] + vals[min(j + i, n - 1)])
        out.append(acc)
    return out


def reference_segment(image, k, sigma):
    """Graph-based segmentation written from the published algorithm with plain loops.

    Returns a list of frozensets of flat pixel indices (the partition).
    Ties between equal edge weights are broken by edge creation order.
    """
    image = np.asarray(image)
    _, H, W = image.shape
    planes = []
    for c in range(3):
        rows = [[float(image[c, y, x]) * 255.0 for x in range(W)] for y in range(H)]
        if sigma > 0:
            mask = _gaussian(sigma)
            rows = [_blur_line(r, mask) for r in rows]
            cols = [_blur_line([rows[y][x] for y in range(H)], mask) for x in range(W)]
            rows = [[cols[x][y] for x in range(W)] for y in range(H)]
        planes.append(rows)

    def diff(y0, x0, y1, x1):
        d = [p[y0][x0] - p[y1][x1] for p in planes]
        return math.sqrt(d[0] * d[0] + d[1] * d[1] + d[2] * d[2])

    edges = []
    for y in range(H):
        for x in range(W):
            for dy, dx in ((0, 1), (1, 0), (1, 1), (-1, 1)):
                ny, nx = y + dy, x + dx
                if 0 <= ny < H and nx < W:
                    edges.append((diff(y, x, ny, nx), len(edges), y * W + x, ny * W + nx))
    edges.sort()

    parent = list(range(H * W))
    size = {i: 1 for i in range(H * W)}
    internal = {i: k for i in range(H * W)}

    def root(i):
        while parent[i] != i:
            i = parent[i]
        return i

    for weight, _, a, b in edges:
        ra, rb = root(a), root(b)
        if ra == rb:
            continue
        if weight <= internal[ra] and weight <= internal[rb]:
            if size[ra] < size[rb]:
                ra, rb = rb, ra
            parent[rb] = ra
            size[ra] += size.pop(rb)
            internal.pop(rb)
            internal[ra] = weight + k / size[ra]

    groups = {}
    for i in range(H * W):
        groups.setdefault(root(i), set()).add(i)
    return sorted((frozenset(g) for g in groups.values()), key=min)


def partition_of(ids):
    """Partition (sorted list of frozensets) induced by an integer id map."""
    flat = np.asarray(ids).reshape(-1)
    groups = {}
    for i, s in enumerate(flat.tolist()):
        groups.setdefault(s, set()).add(i)
    return sorted((frozenset(g) for g in groups.values()), key=min)
