"""Synthetic road and urban scenes for desk-scale experiments.

All pixel values are quantised to multiples of 1/255 so scenes survive a
round trip through 8-bit image files unchanged.
"""

from __future__ import annotations

import numpy as np

from .data import LabeledImage, birdseye_weight_map

ROAD_CLASSES = ("non-road", "road")
URBAN_CLASSES = ("building", "window", "sky", "road", "vegetation", "car", "door", "pavement")
BUILDING, WINDOW, SKY, ROAD, VEGETATION, CAR, DOOR, PAVEMENT = range(8)

_URBAN_COLOURS = {
    BUILDING: (0.70, 0.45, 0.30),
    WINDOW: (0.15, 0.20, 0.38),
    SKY: (0.55, 0.75, 0.95),
    ROAD: (0.28, 0.28, 0.30),
    VEGETATION: (0.20, 0.55, 0.18),
    CAR: (0.85, 0.12, 0.10),
    DOOR: (0.38, 0.22, 0.08),
    PAVEMENT: (0.68, 0.68, 0.62),
}


def _quantise(pixels):
    return (np.rint(np.clip(pixels, 0.0, 1.0) * 255.0) / 255.0).astype(np.float32)


def _blur(field, passes=2):
    for _ in range(passes):
        field = (field + np.roll(field, 1, 0) + np.roll(field, -1, 0) + np.roll(field, 1, 1) + np.roll(field, -1, 1)) / 5
    return field


def _texture(rng, shape, colour, pixel_noise, blotch=0.0):
    """Colour plus white noise plus optional low-frequency blotches (3 x H x W)."""
    H, W = shape
    base = np.asarray(colour, dtype=np.float64)[:, None, None]
    tex = base + pixel_noise * rng.standard_normal((3, H, W))
    if blotch:
        tex += blotch * _blur(rng.standard_normal((H, W)), 3)[None] * 3.0
    return tex


def _road_scene(rng, H, W):
    horizon = int(rng.integers(int(0.35 * H), int(0.5 * H) + 1))
    rows, cols = np.mgrid[0:H, 0:W]

    labels = np.zeros((H, W), dtype=np.uint8)
    t = np.clip((rows - horizon) / max(H - 1 - horizon, 1), 0, 1)
    vx = W * (0.5 + rng.uniform(-0.15, 0.15))
    lean = W * rng.uniform(-0.2, 0.2)
    top_hw, bottom_hw = 0.03 * W, W * rng.uniform(0.3, 0.5)
    centre = vx + lean * t
    half = top_hw + (bottom_hw - top_hw) * t
    road = (rows > horizon) & (np.abs(cols - centre) <= half)
    labels[road] = 1

    sky = _texture(rng, (H, W), (0.5 + rng.uniform(-0.05, 0.05), 0.7, 0.95), 0.02)
    sky += (rows / H * 0.2)[None]
    ground_colour = (0.30 + rng.uniform(-0.08, 0.08), 0.50 + rng.uniform(-0.08, 0.08), 0.20)
    ground = _texture(rng, (H, W), ground_colour, 0.06, blotch=0.04)
    grey = 0.38 + rng.uniform(-0.06, 0.06)
    asphalt = _texture(rng, (H, W), (grey, grey, grey + 0.02), 0.035, blotch=0.015)
    # dashed centre marking, part of the road class
    marking = road & (np.abs(cols - centre) <= np.maximum(0.6, 0.03 * half)) & ((rows // 4) % 2 == 0)
    asphalt[:, marking] = 0.9

    pixels = np.where(rows[None] <= horizon, sky, np.where(road[None], asphalt, ground))
    # shadows fall on road and verge alike
    for _ in range(int(rng.integers(0, 3))):
        cy, cx = rng.uniform(horizon, H), rng.uniform(0, W)
        ry, rx = rng.uniform(2, 0.1 * H), rng.uniform(3, 0.2 * W)
        shadow = (((rows - cy) / ry) ** 2 + ((cols - cx) / rx) ** 2 <= 1) & (rows > horizon)
        pixels[:, shadow] *= 0.6
    weights = birdseye_weight_map(H, W, horizon, 1.0)
    return LabeledImage(_quantise(pixels), labels, weights)


def _position_road_scene(rng, H, W):
    """Road whose extent is fixed in image coordinates and looks exactly like its verge.

    The lower half is one asphalt texture; only the centre band [W/4, 3W/4)
    is labelled road, so that part of the labelling is decidable from
    position alone.
    """
    horizon = H // 2
    rows, cols = np.mgrid[0:H, 0:W]
    labels = ((rows >= horizon) & (cols >= W // 4) & (cols < (3 * W) // 4)).astype(np.uint8)
    sky = _texture(rng, (H, W), (0.5 + rng.uniform(-0.05, 0.05), 0.7, 0.95), 0.02)
    grey = 0.4 + rng.uniform(-0.08, 0.08)
    asphalt = _texture(rng, (H, W), (grey, grey, grey + 0.02), 0.05, blotch=0.02)
    pixels = np.where(rows[None] < horizon, sky, asphalt)
    weights = birdseye_weight_map(H, W, horizon - 1, 1.0)
    return LabeledImage(_quantise(pixels), labels, weights)


def _rect(mask, y0, y1, x0, x1):
    mask[max(y0, 0):max(y1, 0), max(x0, 0):max(x1, 0)] = True


def _urban_scene(rng, H, W):
    rows, cols = np.mgrid[0:H, 0:W]
    labels = np.full((H, W), BUILDING, dtype=np.uint8)
    sky_end = int(H * rng.uniform(0.12, 0.22))
    ground = int(H * rng.uniform(0.64, 0.72))
    pav_end = ground + int(H * rng.uniform(0.08, 0.12))
    labels[:sky_end] = SKY
    labels[ground:pav_end] = PAVEMENT
    labels[pav_end:] = ROAD

    # windows on a jittered grid
    n_rows, n_cols = int(rng.integers(2, 4)), int(rng.integers(3, 6))
    wh, ww = max(3, int(0.09 * H)), max(3, int(0.08 * W))
    span_y = ground - sky_end - int(0.18 * H)
    for i in range(n_rows):
        for j in range(n_cols):
            y0 = sky_end + 2 + int((i + 0.2) * span_y / n_rows)
            x0 = int((j + 0.25) * W / n_cols) + int(rng.integers(-1, 2))
            labels[y0:y0 + wh, x0:x0 + ww] = WINDOW
    # door at the foot of the building
    dh, dw = int(0.13 * H), max(3, int(0.08 * W))
    dx = int(rng.uniform(0.3, 0.6) * W)
    labels[ground - dh:ground, dx:dx + dw] = DOOR
    # car on the road near the kerb
    ch, cw = max(4, int(0.1 * H)), int(0.22 * W)
    cx = int(rng.uniform(0.05, 0.7) * W)
    cy = pav_end - ch // 3
    labels[cy:cy + ch, cx:cx + cw] = CAR
    # a bush or tree on one side
    bx = rng.choice([rng.uniform(0.0, 0.12), rng.uniform(0.88, 1.0)]) * W
    by = ground - rng.uniform(0.0, 0.08) * H
    bush = ((rows - by) / (0.12 * H)) ** 2 + ((cols - bx) / (0.12 * W)) ** 2 <= 1
    labels[bush & (labels != CAR)] = VEGETATION

    pixels = np.zeros((3, H, W))
    noise = {BUILDING: 0.03, WINDOW: 0.02, SKY: 0.015, ROAD: 0.03, VEGETATION: 0.06,
             CAR: 0.03, DOOR: 0.025, PAVEMENT: 0.025}
    for k, colour in _URBAN_COLOURS.items():
        mask = labels == k
        if not mask.any():
            continue
        jitter = rng.uniform(-0.04, 0.04, size=3)
        tex = _texture(rng, (H, W), np.asarray(colour) + jitter, noise[k], blotch=0.02 if k == VEGETATION else 0.0)
        if k == BUILDING:
            tex -= 0.05 * ((rows % 4) == 0)[None]  # mortar lines
        pixels[:, mask] = tex[:, mask]
    return LabeledImage(_quantise(pixels), labels)


def _imbalanced_scene(rng, H, W, ratio, block=8, separation=1.5):
    """Two-class facade (building vs window) with overlapping block colours.

    Blocks are windows with probability 1/(ratio + 1). Each block's colour is
    shifted along a fixed direction by a Gaussian amount whose mean differs by
    ``separation`` standard deviations between the classes, so no classifier
    separates them perfectly.
    """
    labels = np.zeros((H, W), dtype=np.uint8)
    oy, ox = int(rng.integers(0, block)), int(rng.integers(0, block))
    by, bx = (np.arange(H) + oy) // block, (np.arange(W) + ox) // block
    nby, nbx = by[-1] + 1, bx[-1] + 1
    is_window = rng.random((nby, nbx)) < 1.0 / (ratio + 1.0)
    shift = rng.standard_normal((nby, nbx)) + separation * is_window
    labels[:] = np.where(is_window[by][:, bx], WINDOW, BUILDING)
    direction = np.array([-0.6, -0.4, 0.2])[:, None, None]
    base = np.array([0.62, 0.5, 0.4])[:, None, None]
    pixels = base + 0.08 * shift[by][:, bx][None] * direction + 0.02 * rng.standard_normal((3, H, W))
    return LabeledImage(_quantise(pixels), labels)


def generate_synthetic_scene(kind: str, seed: int, height: int = 64, width: int = 64,
                             position_only: bool = False, imbalance: float | None = None) -> LabeledImage:
    """Make one labelled scene.

    kind="road": trapezoidal road under a horizon, labels {0: non-road, 1: road},
    with a birds-eye weight map. ``position_only`` switches to a layout where
    road and verge share a texture and only position tells them apart.

    kind="urban": eight-class facade scene (see ``URBAN_CLASSES``).
    ``imbalance=r`` switches to a two-class building/window scene with an
    r:1 pixel ratio and overlapping class appearance.
    """
    rng = np.random.default_rng(seed)
    if kind == "road":
        img = _position_road_scene(rng, height, width) if position_only else _road_scene(rng, height, width)
    elif kind == "urban":
        img = _imbalanced_scene(rng, height, width, imbalance) if imbalance else _urban_scene(rng, height, width)
    else:
        raise ValueError(f"unknown scene kind {kind!r}")
    img.name = f"{kind}_{seed}"
    return img


def class_names(kind: str) -> tuple[str, ...]:
    return ROAD_CLASSES if kind == "road" else URBAN_CLASSES
