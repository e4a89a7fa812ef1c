"""Difference maps and 1x4 inspection panels (input | synthetic | difference | mask)."""
from __future__ import annotations

import numpy as np
from PIL import Image

PANEL_GAP = 2


def render_difference(x, gx, absolute: bool = False) -> np.ndarray:
    """|x - gx| in [0, 1].

    Per-image max-normalized by default; ``absolute=True`` keeps the data scale
    so maps of different images can be compared side by side.
    """
    diff = np.abs(np.asarray(x, dtype=np.float64) - np.asarray(gx, dtype=np.float64))
    if absolute:
        return np.clip(diff, 0.0, 1.0)
    peak = diff.max()
    return diff / peak if peak > 0 else diff


def panel(x, gx, mask, absolute: bool = False) -> np.ndarray:
    tiles = [
        np.clip(np.asarray(x, dtype=np.float64), 0.0, 1.0),
        np.clip(np.asarray(gx, dtype=np.float64), 0.0, 1.0),
        render_difference(x, gx, absolute=absolute),
        (np.asarray(mask) > 0).astype(np.float64),
    ]
    gap = np.ones((tiles[0].shape[0], PANEL_GAP))
    row = [tiles[0]]
    for tile in tiles[1:]:
        row.extend([gap, tile])
    return np.hstack(row)


def save_gray(pixels, path):
    """8-bit grayscale PNG of values in [0, 1]."""
    quantized = np.round(np.clip(pixels, 0.0, 1.0) * 255.0).astype(np.uint8)
    Image.fromarray(quantized).save(path)
