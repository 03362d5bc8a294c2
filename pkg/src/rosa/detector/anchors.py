"""Anchor segment generation over the feature-pyramid time grids."""
from __future__ import annotations

import numpy as np

from .boxes import Anchor

# per-level time stride (s) on the 1 s frame grid, and anchor widths (s);
# widths bracket the 10 s scoring minimum up to long mixed events
DEFAULT_LEVEL_STRIDES = (4.0, 8.0, 16.0)
DEFAULT_SCALES = ((10.0, 15.0, 22.0), (30.0, 45.0, 65.0), (90.0, 130.0, 180.0))


def generate_anchors(time_len: float,
                     level_strides=DEFAULT_LEVEL_STRIDES,
                     scales_per_level=DEFAULT_SCALES) -> list[Anchor]:
    """Anchors at every feature step of every level, level-major then
    time-major then scale-minor."""
    anchors: list[Anchor] = []
    for level, (stride, scales) in enumerate(zip(level_strides, scales_per_level)):
        if stride <= 0 or any(s <= 0 for s in scales):
            raise ValueError("strides and scales must be positive")
        n_steps = int(time_len // stride)
        for i in range(n_steps):
            center = (i + 0.5) * stride
            for w in scales:
                anchors.append(Anchor(x_a=center, w_a=w, level=level))
    return anchors


def anchors_as_arrays(anchors: list[Anchor]) -> dict[str, np.ndarray]:
    centers = np.array([a.x_a for a in anchors])
    widths = np.array([a.w_a for a in anchors])
    levels = np.array([a.level for a in anchors], dtype=int)
    intervals = np.stack([centers - widths / 2, centers + widths / 2], axis=1)
    return {"center": centers, "width": widths, "level": levels, "interval": intervals}
