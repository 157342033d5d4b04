"""Pixel-wise labeling of whole images with a patch network."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .data import LabeledImage, extract_patch, normalized_position, pad_image
from .errors import DimensionError
from .network import scores_to_probs
from .postproc import SegmentationParams, fuse_labels, segment

# colours for overlays, indexed by class id
PALETTE = np.array(
    [
        [0.55, 0.27, 0.07],  # building
        [0.00, 0.00, 1.00],  # window
        [0.53, 0.81, 0.92],  # sky
        [0.50, 0.50, 0.50],  # road
        [0.00, 0.60, 0.00],  # vegetation
        [1.00, 0.00, 0.00],  # car
        [1.00, 1.00, 0.00],  # door
        [0.80, 0.60, 0.80],  # pavement
    ]
)


def _pixel_scores(model, pixels, batch_size: int, threads: int, naive: bool) -> np.ndarray:
    _, H, W = pixels.shape
    size = model.spec.input_shape[1]
    if model.spec.input_shape[1] != model.spec.input_shape[2]:
        raise DimensionError("only square patch networks are supported")
    rows, cols = np.divmod(np.arange(H * W), W)
    x, y = normalized_position(rows, cols, H, W)
    positions = np.stack([x, y], axis=1).astype(model.dtype)
    if naive:
        windows = None
    else:
        # (H, W, 3, size, size) view: every patch without copying the image
        windows = sliding_window_view(pad_image(pixels, size), (size, size), axis=(1, 2)).transpose(1, 2, 0, 3, 4)

    def run(start):
        r, c = rows[start:start + batch_size], cols[start:start + batch_size]
        if naive:
            patches = np.stack([extract_patch(pixels, int(i), int(j), size) for i, j in zip(r, c)])
        else:
            patches = windows[r, c]
        pos = positions[start:start + batch_size] if model.has_aux else None
        return model.forward(patches, pos, cache=False)

    starts = range(0, H * W, batch_size)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(run, starts))
    else:
        parts = [run(s) for s in starts]
    return np.concatenate(parts)


def label_image(model, image, batch_size: int = 48, postproc: SegmentationParams | None = None,
                threads: int = 1, naive: bool = False, fusion: str = "mean"):
    """Classify every pixel of ``image`` (3 x H x W in [0, 1]).

    Returns ``(prob, labels)``: a K x H x W probability map summing to one per
    pixel and an H x W uint8 label map (per-pixel argmax, or fused over
    segments when ``postproc`` is given). ``naive=True`` extracts each patch
    separately instead of slicing one padded copy; both paths agree exactly.
    """
    pixels = image.pixels if isinstance(image, LabeledImage) else np.asarray(image, dtype=np.float32)
    if pixels.ndim != 3 or pixels.shape[0] != 3 or min(pixels.shape[1:]) < 1:
        raise DimensionError(f"expected a 3 x H x W image, got {pixels.shape}")
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    _, H, W = pixels.shape
    scores = _pixel_scores(model, pixels, batch_size, threads, naive)
    probs = scores_to_probs(scores)
    prob = np.ascontiguousarray(probs.T.reshape(-1, H, W)).astype(np.float32)
    if postproc is not None:
        labels = fuse_labels(prob, segment(pixels, postproc), fusion)
    else:
        labels = prob.argmax(axis=0).astype(np.uint8)
    return prob, labels


def overlay(pixels, labels, binary: bool) -> np.ndarray:
    """Blend class colours over the image; binary tasks paint only class 1, in green."""
    pixels = np.asarray(pixels, dtype=np.float64)
    labels = np.asarray(labels)
    out = pixels.copy()
    if binary:
        mask = labels == 1
        colour = np.array([0.0, 1.0, 0.0])[:, None]
        out[:, mask] = 0.5 * pixels[:, mask] + 0.5 * colour
    else:
        known = labels < len(PALETTE)
        out[:, known] = 0.5 * pixels[:, known] + 0.5 * PALETTE[labels[known]].T
    return out.astype(np.float32)
