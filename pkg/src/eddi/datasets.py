"""Self-contained synthetic datasets for experiments and tests.

Nothing here downloads anything. Three generators cover the harness:

* ``planted_signal``: 8 variables where one column is an exact copy of
  the target, so a good acquisition strategy should grab it first.
* ``uci_style``: a 13-column regression table with three clusters, each
  driven by its own factor column. Cluster columns reveal which driver
  matters, rewarding strategies that adapt their question order per row.
* ``digit_images``: 2000 procedurally rendered 28x28 digit glyphs
  (strokes, jitter, blur) standing in for handwritten-digit data. Each
  glyph is stippled: pixels are binary dots drawn at a per-image stroke
  rate inside the glyph and a per-image speckle rate outside it.

All generators return (schema, rows) with rows in raw units.
"""

from __future__ import annotations

import numpy as np
from scipy.ndimage import gaussian_filter

from .model import Variable, VariableSchema
from .rng import SeedKey

PLANTED_SEED_TAG = 0x9A17ED
UCI_SEED_TAG = 0x0C17AB
IMAGE_SEED_TAG = 0xD161D5


def planted_signal(n_rows: int = 500, seed: int = 0) -> tuple[VariableSchema, np.ndarray]:
    """One column ("copy") duplicates the target; six others are noise."""
    rng = SeedKey(seed, PLANTED_SEED_TAG).generator()
    target = rng.uniform(0.02, 0.98, n_rows)
    noise = rng.uniform(0.0, 1.0, size=(n_rows, 6))
    rows = np.column_stack([target, noise, target])
    names = ["copy"] + [f"noise_{k}" for k in range(1, 7)] + ["target"]
    variables = tuple(
        Variable(name=n, kind="continuous", target=(n == "target")) for n in names
    )
    return VariableSchema(variables), rows


def uci_style(n_rows: int = 506, seed: int = 0) -> tuple[VariableSchema, np.ndarray]:
    """A 13-column regression table with a two-level cluster hierarchy.

    Rows fall into three districts (think neighbourhoods) with well
    separated outcome centres; ``district`` and ``zoning`` both reveal
    which one. Each district splits into two halves worth +1 or -1 on
    the outcome, and only the district's own detail column records the
    half: the other two detail columns read near zero for that row. The
    trace columns are uninformative survey filler. A fixed question
    order must hedge across the three detail columns; reading a district
    column first tells an adaptive strategy which detail column matters
    for this particular row.
    """
    rng = SeedKey(seed, UCI_SEED_TAG).generator()
    cluster = rng.integers(0, 3, n_rows)
    centers = np.array([-4.0, 0.0, 4.0])
    half = 2.0 * rng.integers(0, 2, n_rows) - 1.0
    y = centers[cluster] + half + 0.10 * rng.standard_normal(n_rows)

    cols = {
        "district": centers[cluster] + 0.50 * rng.standard_normal(n_rows),
        "zoning": 0.8 * centers[cluster] + 0.80 * rng.standard_normal(n_rows),
    }
    for k, label in enumerate("abc"):
        gate = (cluster == k).astype(np.float64)
        cols[f"detail_{label}"] = gate * (2.0 * half + 0.30 * rng.standard_normal(n_rows)) + (
            1.0 - gate
        ) * 0.15 * rng.standard_normal(n_rows)
    for k in range(1, 8):
        cols[f"trace_{k}"] = rng.standard_normal(n_rows)
    cols["outcome"] = y

    names = list(cols)
    rows = np.column_stack([cols[n] for n in names])
    variables = tuple(
        Variable(name=n, kind="continuous", target=(n == "outcome")) for n in names
    )
    return VariableSchema(variables), rows


# Stroke endpoints per digit in a unit box, (x0, y0, x1, y1) with y down.
_DIGIT_STROKES: dict[int, list[tuple[float, float, float, float]]] = {
    0: [(0.3, 0.15, 0.7, 0.15), (0.7, 0.15, 0.8, 0.5), (0.8, 0.5, 0.7, 0.85),
        (0.7, 0.85, 0.3, 0.85), (0.3, 0.85, 0.2, 0.5), (0.2, 0.5, 0.3, 0.15)],
    1: [(0.35, 0.3, 0.55, 0.12), (0.55, 0.12, 0.55, 0.88), (0.35, 0.88, 0.75, 0.88)],
    2: [(0.25, 0.3, 0.4, 0.12), (0.4, 0.12, 0.7, 0.15), (0.7, 0.15, 0.75, 0.4),
        (0.75, 0.4, 0.25, 0.85), (0.25, 0.85, 0.8, 0.85)],
    3: [(0.25, 0.15, 0.7, 0.15), (0.7, 0.15, 0.75, 0.35), (0.75, 0.35, 0.5, 0.5),
        (0.5, 0.5, 0.75, 0.65), (0.75, 0.65, 0.7, 0.85), (0.7, 0.85, 0.25, 0.85)],
    4: [(0.65, 0.12, 0.25, 0.6), (0.25, 0.6, 0.8, 0.6), (0.65, 0.12, 0.65, 0.88)],
    5: [(0.75, 0.12, 0.3, 0.12), (0.3, 0.12, 0.28, 0.45), (0.28, 0.45, 0.65, 0.45),
        (0.65, 0.45, 0.75, 0.65), (0.75, 0.65, 0.65, 0.85), (0.65, 0.85, 0.25, 0.85)],
    6: [(0.65, 0.12, 0.35, 0.35), (0.35, 0.35, 0.25, 0.65), (0.25, 0.65, 0.4, 0.85),
        (0.4, 0.85, 0.7, 0.8), (0.7, 0.8, 0.7, 0.55), (0.7, 0.55, 0.3, 0.55)],
    7: [(0.22, 0.12, 0.78, 0.12), (0.78, 0.12, 0.45, 0.88)],
    8: [(0.5, 0.12, 0.72, 0.3), (0.72, 0.3, 0.5, 0.48), (0.5, 0.48, 0.28, 0.3),
        (0.28, 0.3, 0.5, 0.12), (0.5, 0.48, 0.75, 0.68), (0.75, 0.68, 0.5, 0.88),
        (0.5, 0.88, 0.25, 0.68), (0.25, 0.68, 0.5, 0.48)],
    9: [(0.7, 0.4, 0.45, 0.5), (0.45, 0.5, 0.28, 0.32), (0.28, 0.32, 0.45, 0.12),
        (0.45, 0.12, 0.7, 0.22), (0.7, 0.22, 0.7, 0.6), (0.7, 0.6, 0.6, 0.88)],
}

IMAGE_SIDE = 28
IMAGE_PIXELS = IMAGE_SIDE * IMAGE_SIDE


def _render_digit(digit: int, rng: np.random.Generator) -> np.ndarray:
    side = IMAGE_SIDE
    ys, xs = np.mgrid[0:side, 0:side]
    px = np.stack([xs.ravel(), ys.ravel()], axis=1).astype(np.float64)

    scale = side * rng.uniform(0.75, 0.95)
    offset = np.array(
        [
            (side - scale) / 2 + rng.uniform(-2.0, 2.0),
            (side - scale) / 2 + rng.uniform(-2.0, 2.0),
        ]
    )
    shear = rng.uniform(-0.15, 0.15)
    thickness = rng.uniform(0.9, 1.4)

    canvas = np.zeros(px.shape[0])
    for x0, y0, x1, y1 in _DIGIT_STROKES[digit]:
        p0 = offset + scale * np.array([x0 + shear * (0.5 - y0), y0])
        p1 = offset + scale * np.array([x1 + shear * (0.5 - y1), y1])
        seg = p1 - p0
        length2 = float(seg @ seg)
        if length2 == 0.0:
            d = np.linalg.norm(px - p0, axis=1)
        else:
            t = np.clip((px - p0) @ seg / length2, 0.0, 1.0)
            d = np.linalg.norm(px - (p0 + t[:, None] * seg), axis=1)
        canvas = np.maximum(canvas, np.clip(1.0 - d / thickness, 0.0, 1.0))
    image = gaussian_filter(canvas.reshape(side, side), sigma=0.6)
    peak = image.max()
    if peak > 0:
        image = image / peak
    return np.clip(image, 0.0, 1.0).ravel()


# Glyph intensities above this level count as stroke when stippling.
_STROKE_LEVEL = 0.4
# Per-image dot rates: inside the stroke and on the open ground.
_STROKE_RATE = (0.25, 1.0)
_GROUND_RATE = (0.0, 0.3)


def image_schema() -> VariableSchema:
    variables = tuple(
        Variable(name=f"px_{i:03d}", kind="binary", target=(i == IMAGE_PIXELS - 1))
        for i in range(IMAGE_PIXELS)
    )
    return VariableSchema(variables)


def digit_images(n_images: int = 2000, seed: int = 0) -> tuple[VariableSchema, np.ndarray]:
    """Stippled digit glyphs as binary pixel rows, flattened row-major.

    Every image draws its own stroke and ground dot rates, so absolute
    dot density is a per-image latent. Under row-wise masking the visible
    dot density only determines the product of that latent and the
    observed fraction; separating the two requires knowing how many
    pixels were actually seen, which is what rewards mask-aware encoders
    on this corpus.
    """
    rng = SeedKey(seed, IMAGE_SEED_TAG).generator()
    rows = np.empty((n_images, IMAGE_PIXELS))
    for i in range(n_images):
        glyph = _render_digit(int(rng.integers(0, 10)), rng)
        stroke = glyph > _STROKE_LEVEL
        lam = rng.uniform(*_STROKE_RATE)
        mu = rng.uniform(*_GROUND_RATE)
        p = np.where(stroke, lam, mu)
        rows[i] = (rng.random(IMAGE_PIXELS) < p).astype(np.float64)
    return image_schema(), rows
