"""Differentiable 1D RoIAlign: uniform bins over the interval, two linearly
interpolated samples per bin, averaged."""
from __future__ import annotations

import numpy as np

from ..autodiff import Tensor


def interpolation_matrix(length: int, step: float, t_start: float, t_end: float,
                         output_bins: int) -> np.ndarray:
    """(length, output_bins) weights so that feat(C, L) @ M aligns the interval.

    Sample points are the two bin interior quarter points (the 2-samples-per-bin
    rule); each point linearly interpolates between neighboring feature steps.
    Feature step i is taken to sit at time (i + 0.5) * step. Overhanging sample
    points clamp to the feature map edges.
    """
    mat = np.zeros((length, output_bins))
    bin_w = (t_end - t_start) / output_bins
    for b in range(output_bins):
        for q in (0.25, 0.75):
            t = t_start + (b + q) * bin_w
            pos = t / step - 0.5
            pos = min(max(pos, 0.0), length - 1.0)
            i0 = int(np.floor(pos))
            i1 = min(i0 + 1, length - 1)
            frac = pos - i0
            mat[i0, b] += 0.5 * (1.0 - frac)
            mat[i1, b] += 0.5 * frac
    return mat


def roi_align_1d(feature_map: Tensor, step: float, t_start: float, t_end: float,
                 output_bins: int) -> Tensor:
    """feature_map: (C, L) with time step ``step`` seconds -> (C, output_bins)."""
    length = feature_map.shape[1]
    mat = interpolation_matrix(length, step, t_start, t_end, output_bins)
    return feature_map @ Tensor(mat)
