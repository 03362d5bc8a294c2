"""Miniature residual backbone with a 3-level feature pyramid, per-level
segment proposal heads and a shared classification/regression head.

The backbone consumes a (3, range bins, frames) stack chunk. Pyramid levels
have time strides 4/8/16 frames; each 2D feature map is mean-pooled over the
range dimension before the 1D proposal head. Proposals are aligned from a
common-width lateral projection of their source level.
"""
from __future__ import annotations

import numpy as np

from ..autodiff import Tensor, nn, ops, softmax
from .anchors import DEFAULT_LEVEL_STRIDES, DEFAULT_SCALES

LATERAL_CHANNELS = 24
ROI_BINS = 8
N_CLASSES = 5


class ResidualStage(nn.Module):
    def __init__(self, c_in: int, c_out: int, stride: tuple[int, int],
                 rng: np.random.Generator):
        self.down = nn.Conv2d(c_in, c_out, (3, 3), rng, stride=stride)
        self.conv = nn.Conv2d(c_out, c_out, (3, 3), rng)

    def __call__(self, x: Tensor) -> Tensor:
        h = self.down(x).relu()
        return (h + self.conv(h)).relu()


class SpnHead(nn.Module):
    """Per-level 1D head emitting (objectness, t_x, t_w) for each anchor scale."""

    def __init__(self, c_in: int, n_scales: int, rng: np.random.Generator):
        self.conv = nn.Conv1d(c_in, 24, 3, rng)
        self.out = nn.Conv1d(24, 3 * n_scales, 1, rng)
        self.n_scales = n_scales

    def __call__(self, feat: Tensor) -> Tensor:
        """feat: (1, C, L) -> (n_scales * 3, L)."""
        h = self.conv(feat).relu()
        return self.out(h)[0]


class SoiHead(nn.Module):
    """Shared trunk over aligned features -> class scores + per-class offsets."""

    def __init__(self, rng: np.random.Generator):
        d_in = LATERAL_CHANNELS * ROI_BINS
        self.fc1 = nn.Linear(d_in, 48, rng)
        self.fc2 = nn.Linear(48, 48, rng)
        self.cls = nn.Linear(48, N_CLASSES, rng)
        self.reg = nn.Linear(48, 2 * N_CLASSES, rng)

    def __call__(self, aligned: Tensor) -> tuple[Tensor, Tensor, Tensor]:
        h = self.fc1(aligned.reshape(-1)).relu()
        h = self.fc2(h).relu()
        logits = self.cls(h)
        reg = self.reg(h)
        return logits, reg[:N_CLASSES], reg[N_CLASSES:]


class DetectorModel(nn.Module):
    def __init__(self, n_range_bins: int, seed: int = 0,
                 level_strides=DEFAULT_LEVEL_STRIDES, scales=DEFAULT_SCALES,
                 range_reduction: str = "mean"):
        rng = np.random.default_rng(seed)
        self.stem = nn.Conv2d(3, 16, (3, 5), rng, stride=(2, 2))
        self.stage0 = ResidualStage(16, 16, (2, 2), rng)   # time stride 4
        self.stage1 = ResidualStage(16, 32, (1, 2), rng)   # time stride 8
        self.stage2 = ResidualStage(32, 64, (1, 2), rng)   # time stride 16
        self.lateral = [nn.Conv1d(c, LATERAL_CHANNELS, 1, rng) for c in (16, 32, 64)]
        self.spn = [SpnHead(c, len(s), rng) for c, s in zip((16, 32, 64), scales)]
        self.level_strides = tuple(level_strides)
        self.scales = tuple(tuple(s) for s in scales)
        self.head = SoiHead(rng)
        self.n_range_bins = n_range_bins
        if range_reduction not in ("mean", "max"):
            raise ValueError(f"range_reduction must be 'mean' or 'max', got {range_reduction!r}")
        self.range_reduction = range_reduction

    def _squash_range(self, feat2d: Tensor) -> Tensor:
        """(1, C, R, T) -> (1, C, T) by pooling over the range dimension."""
        r = feat2d.shape[2]
        pooled = (ops.max_pool2d(feat2d, r, 1) if self.range_reduction == "max"
                  else ops.avg_pool2d(feat2d, r, 1))
        return pooled.reshape(1, feat2d.shape[1], feat2d.shape[3])

    def pyramid(self, chunk: Tensor) -> list[Tensor]:
        """chunk: (3, R, T) -> three (1, C_l, T / stride_l) feature maps."""
        x = chunk.reshape(1, *chunk.shape)
        h = self.stem(x).relu()
        f0 = self.stage0(h)
        f1 = self.stage1(f0)
        f2 = self.stage2(f1)
        return [self._squash_range(f) for f in (f0, f1, f2)]

    def lateral_maps(self, pyramid: list[Tensor]) -> list[Tensor]:
        return [lat(f)[0] for lat, f in zip(self.lateral, pyramid)]

    def spn_outputs(self, pyramid: list[Tensor]) -> list[Tensor]:
        """Per level: (3 * n_scales, L_level) raw head outputs."""
        return [head(f) for head, f in zip(self.spn, pyramid)]

    def level_for_width(self, width: float) -> int:
        for lvl, scales in enumerate(self.scales):
            if width <= scales[-1] * 1.2:
                return lvl
        return len(self.scales) - 1

    def classify_roi(self, lateral_map: Tensor, step: float, t_start: float,
                     t_end: float) -> tuple[Tensor, Tensor, Tensor]:
        from .roialign import roi_align_1d
        aligned = roi_align_1d(lateral_map, step, t_start, t_end, ROI_BINS)
        return self.head(aligned)

    def roi_probs(self, logits: Tensor) -> np.ndarray:
        return softmax(logits).data
