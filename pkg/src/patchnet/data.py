"""Labeled images, patch extraction and training pools."""

from __future__ import annotations

import enum
import json
import os
from dataclasses import dataclass

import numpy as np

from . import pnm
from .errors import BoundsError, DataError, ParameterError
from .tensor import DTYPE, load_tensor, save_tensor
from .trainer import compute_class_weights

UNLABELED = 255
PATCH_SIZE = 28


class Weighting(str, enum.Enum):
    NONE = "none"
    INVERSE_CLASS_FREQUENCY = "inverse_class_frequency"
    PIXEL_WEIGHT_MAP = "pixel_weight_map"


@dataclass
class LabeledImage:
    pixels: np.ndarray  # 3 x H x W in [0, 1]
    labels: np.ndarray  # H x W class ids, UNLABELED for excluded pixels
    weight_map: np.ndarray | None = None
    name: str = ""

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels, dtype=DTYPE)
        self.labels = np.asarray(self.labels, dtype=np.uint8)
        if self.pixels.ndim != 3 or self.pixels.shape[0] != 3:
            raise DataError(f"pixels must be 3 x H x W, got {self.pixels.shape}")
        if self.labels.shape != self.pixels.shape[1:]:
            raise DataError(f"label map {self.labels.shape} does not match image {self.pixels.shape[1:]}")
        if self.weight_map is not None:
            self.weight_map = np.asarray(self.weight_map, dtype=DTYPE)
            if self.weight_map.shape != self.labels.shape:
                raise DataError(f"weight map {self.weight_map.shape} does not match image {self.labels.shape}")
            if np.any(self.weight_map < 0):
                raise DataError("weight map has negative entries")

    @property
    def shape(self):
        return self.labels.shape


@dataclass
class PatchSample:
    patch: np.ndarray
    position: tuple[float, float]
    label: int
    weight: float


def normalized_position(row, col, height: int, width: int):
    """``(x, y)`` with x = col/(W-1), y = row/(H-1); a single row or column maps to 0."""
    col = np.asarray(col, dtype=np.float64)
    row = np.asarray(row, dtype=np.float64)
    x = col / (width - 1) if width > 1 else np.zeros_like(col)
    y = row / (height - 1) if height > 1 else np.zeros_like(row)
    return x, y


def reflect_index(i, n: int):
    """Map any integer index onto [0, n) by mirror reflection that repeats the edge pixel."""
    m = np.mod(i, 2 * n)
    return np.where(m >= n, 2 * n - 1 - m, m)


def pad_image(pixels, size: int = PATCH_SIZE) -> np.ndarray:
    """Pad so that ``padded[:, r:r+size, c:c+size]`` is the patch centred on (r, c)."""
    _, H, W = pixels.shape
    before, after = size // 2, size - size // 2 - 1
    rows = reflect_index(np.arange(-before, H + after), H)
    cols = reflect_index(np.arange(-before, W + after), W)
    return np.ascontiguousarray(pixels[:, rows][:, :, cols])


def extract_patch(image, row: int, col: int, size: int = PATCH_SIZE) -> np.ndarray:
    """Return the size x size patch whose index ``size // 2`` sits on (row, col).

    Out-of-image pixels are filled by reflection.
    """
    pixels = image.pixels if isinstance(image, LabeledImage) else np.asarray(image)
    _, H, W = pixels.shape
    if not (0 <= row < H and 0 <= col < W):
        raise BoundsError(f"patch centre ({row}, {col}) outside {H}x{W} image")
    half = size // 2
    rows = reflect_index(np.arange(row - half, row - half + size), H)
    cols = reflect_index(np.arange(col - half, col - half + size), W)
    return pixels[:, rows][:, :, cols]


class PatchPool:
    """Training samples stored as pixel references into padded source images.

    Indexing yields :class:`PatchSample`; :meth:`batch` assembles arrays for
    many samples at once.
    """

    def __init__(self, images, image_index, rows, cols, labels, weights, size=PATCH_SIZE):
        self.images = list(images)
        self.size = size
        self._padded = [pad_image(im.pixels, size) for im in self.images]
        self.image_index = np.asarray(image_index, dtype=np.int64)
        self.rows = np.asarray(rows, dtype=np.int64)
        self.cols = np.asarray(cols, dtype=np.int64)
        self.labels = np.asarray(labels, dtype=np.int64)
        self.weights = np.asarray(weights, dtype=np.float64)
        h = np.array([im.shape[0] for im in self.images] or [1], dtype=np.int64)[self.image_index]
        w = np.array([im.shape[1] for im in self.images] or [1], dtype=np.int64)[self.image_index]
        x = np.where(w > 1, self.cols / np.maximum(w - 1, 1), 0.0)
        y = np.where(h > 1, self.rows / np.maximum(h - 1, 1), 0.0)
        self.positions = np.stack([x, y], axis=1).astype(DTYPE).reshape(-1, 2)

    def __len__(self):
        return len(self.labels)

    def __getitem__(self, i) -> PatchSample:
        patches, pos, labels, weights = self.batch([i])
        return PatchSample(patches[0], (float(pos[0, 0]), float(pos[0, 1])), int(labels[0]), float(weights[0]))

    def class_counts(self) -> dict[int, int]:
        values, counts = np.unique(self.labels, return_counts=True)
        return {int(v): int(c) for v, c in zip(values, counts)}

    def channel_mean(self) -> list[float]:
        """Per-channel mean over every pixel of the source images."""
        if not self.images:
            return [0.0] * 3
        sums = sum(im.pixels.reshape(im.pixels.shape[0], -1).sum(axis=1, dtype=np.float64) for im in self.images)
        count = sum(im.shape[0] * im.shape[1] for im in self.images)
        return [float(v) for v in np.float32(sums / count)]

    def batch(self, indices):
        indices = np.asarray(indices, dtype=np.int64)
        s = self.size
        patches = np.empty((len(indices), 3, s, s), dtype=DTYPE)
        for j, k in enumerate(indices):
            r, c = self.rows[k], self.cols[k]
            patches[j] = self._padded[self.image_index[k]][:, r:r + s, c:c + s]
        return patches, self.positions[indices], self.labels[indices], self.weights[indices]


def build_training_pool(images, samples_per_image: int = 1000, weighting=Weighting.NONE, rng=None,
                        size: int = PATCH_SIZE) -> PatchPool:
    """Sample labeled pixels uniformly per image and attach example weights.

    Unlabeled pixels are never sampled. Under ``pixel_weight_map`` pixels with
    zero weight are skipped as well, since every sample needs a positive weight.
    """
    weighting = Weighting(weighting)
    if rng is None or isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(rng)
    img_idx, rows, cols, labels, weights = [], [], [], [], []
    for i, im in enumerate(images):
        valid = im.labels != UNLABELED
        if weighting is Weighting.PIXEL_WEIGHT_MAP:
            if im.weight_map is None:
                raise DataError(f"image {im.name or i} has no weight map but weighting is pixel_weight_map")
            valid &= im.weight_map > 0
        flat = np.flatnonzero(valid)
        if flat.size == 0:
            continue
        take = min(samples_per_image, flat.size)
        chosen = np.sort(rng.choice(flat, size=take, replace=False))
        r, c = np.divmod(chosen, im.shape[1])
        img_idx.append(np.full(take, i))
        rows.append(r)
        cols.append(c)
        labels.append(im.labels[r, c].astype(np.int64))
        if weighting is Weighting.PIXEL_WEIGHT_MAP:
            weights.append(im.weight_map[r, c].astype(np.float64))
        else:
            weights.append(np.ones(take))
    if not img_idx:
        return PatchPool(images, [], [], [], [], [], size)
    img_idx, rows, cols = np.concatenate(img_idx), np.concatenate(rows), np.concatenate(cols)
    labels, weights = np.concatenate(labels), np.concatenate(weights)
    if weighting is Weighting.INVERSE_CLASS_FREQUENCY:
        values, counts = np.unique(labels, return_counts=True)
        cw = compute_class_weights(dict(zip(values.tolist(), counts.tolist())))
        weights = np.array([cw[int(y)] for y in labels])
    return PatchPool(images, img_idx, rows, cols, labels, weights, size)


def birdseye_weight_map(height: int, width: int, horizon_row: int, strength: float = 1.0) -> np.ndarray:
    """Per-pixel weights approximating ground-plane area under a pinhole perspective.

    Rows at or above the horizon get 0; row r below it gets
    ``(1 / (r - horizon_row)) ** strength``, rescaled so the nonzero entries
    average to 1.
    """
    if not 0 <= horizon_row < height:
        raise ParameterError(f"horizon_row {horizon_row} outside [0, {height})")
    if strength < 0:
        raise ParameterError("strength must be >= 0")
    w = np.zeros((height, width), dtype=np.float64)
    below = np.arange(horizon_row + 1, height)
    if below.size:
        row_w = (1.0 / (below - horizon_row)) ** strength
        row_w /= row_w.mean()
        w[below, :] = row_w[:, None]
    return w.astype(DTYPE)


# -- files ------------------------------------------------------------------

load_image = pnm.read_ppm
save_image = pnm.write_ppm


def load_labelmap(path) -> np.ndarray:
    labels = pnm.read_pgm(path)
    if labels.dtype != np.uint8:
        raise DataError(f"{path}: label maps must be 8-bit")
    return labels


save_labelmap = pnm.write_pgm


def load_manifest(path) -> list[dict]:
    """Read a dataset manifest, resolving paths relative to its directory."""
    base = os.path.dirname(os.path.abspath(path))
    with open(path) as fh:
        try:
            entries = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(entries, list):
        raise DataError(f"{path}: manifest must be a JSON list")
    out = []
    for e in entries:
        if not isinstance(e, dict) or "image" not in e or "labels" not in e:
            raise DataError(f"{path}: every entry needs 'image' and 'labels'")
        e = dict(e)
        for key in ("image", "labels", "weights"):
            if e.get(key):
                e[key] = os.path.join(base, e[key])
        out.append(e)
    return out


def load_labeled_image(entry: dict) -> LabeledImage:
    weights = load_tensor(entry["weights"]) if entry.get("weights") else None
    name = os.path.splitext(os.path.basename(entry["image"]))[0]
    return LabeledImage(load_image(entry["image"]), load_labelmap(entry["labels"]), weights, name)


def save_labeled_image(image: LabeledImage, directory, stem: str) -> dict:
    """Write image, label map and optional weight map; return a manifest entry."""
    entry = {"image": f"{stem}.ppm", "labels": f"{stem}_labels.pgm"}
    save_image(os.path.join(directory, entry["image"]), image.pixels)
    save_labelmap(os.path.join(directory, entry["labels"]), image.labels)
    if image.weight_map is not None:
        entry["weights"] = f"{stem}_weights.ptnt"
        save_tensor(os.path.join(directory, entry["weights"]), image.weight_map)
    return entry
