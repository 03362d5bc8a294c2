"""Whole-night event detection: overlapped chunking, proposal scoring,
aligned classification and a global merge pass."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..autodiff import Tensor
from .boxes import DetectedSegment, decode_segment, nms_1d
from .loss import flatten_spn
from .model import DetectorModel

CHUNK_SECONDS = 600.0
OVERLAP_SECONDS = 60.0
MIN_CHUNK_SECONDS = 64.0


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-x))


@dataclass
class DetectionResult:
    segments: list[DetectedSegment] = field(default_factory=list)
    skipped_short_chunks: int = 0
    chunk_starts: list[float] = field(default_factory=list)


def chunk_starts(n_frames: int, frame_hop: float,
                 chunk_seconds: float = CHUNK_SECONDS,
                 overlap_seconds: float = OVERLAP_SECONDS) -> tuple[list[int], int]:
    """Frame indices of chunk starts, plus frames per chunk."""
    chunk_frames = int(round(chunk_seconds / frame_hop))
    stride = chunk_frames - int(round(overlap_seconds / frame_hop))
    if stride <= 0:
        raise ValueError("overlap must be smaller than the chunk length")
    if n_frames <= chunk_frames:
        return [0], min(chunk_frames, n_frames)
    starts = list(range(0, n_frames - chunk_frames + 1, stride))
    if starts[-1] + chunk_frames < n_frames:
        starts.append(n_frames - chunk_frames)  # cover the tail exactly
    return starts, chunk_frames


def detect_chunk(model: DetectorModel, chunk: np.ndarray, frame_hop: float,
                 top_proposals: int = 64,
                 score_threshold: float = 0.05) -> list[DetectedSegment]:
    """Detections within one (3, R, T) chunk, in chunk-local seconds."""
    time_len = chunk.shape[2] * frame_hop
    x = Tensor(np.ascontiguousarray(chunk, dtype=np.float64))
    pyr = model.pyramid(x)
    arrays, obj, tx, tw = flatten_spn(model, model.spn_outputs(pyr), time_len)
    scores = _sigmoid(obj.data)
    order = np.lexsort((np.arange(len(scores)), -scores))[:top_proposals]
    lateral = model.lateral_maps(pyr)
    out: list[DetectedSegment] = []
    for i in order:
        t_w = float(np.clip(tw.data[i], -2.0, 2.0))
        x_c = arrays["center"][i] + float(tx.data[i]) * arrays["width"][i]
        w = arrays["width"][i] * float(np.exp(t_w))
        lo = max(x_c - w / 2.0, 0.0)
        hi = min(x_c + w / 2.0, time_len)
        if hi - lo < 1.0:
            continue
        level = model.level_for_width(hi - lo)
        logits, r_tx, r_tw = model.classify_roi(
            lateral[level], model.level_strides[level] * frame_hop, lo, hi)
        probs = model.roi_probs(logits)
        seg = decode_segment(0.5 * (lo + hi), hi - lo, probs, r_tx.data, r_tw.data)
        if seg is None or seg.score < score_threshold:
            continue
        seg.t_start = max(seg.t_start, 0.0)
        seg.t_end = min(seg.t_end, time_len)
        if seg.t_end > seg.t_start:
            out.append(seg)
    return out


def detect_events(model: DetectorModel, channels: np.ndarray, frame_hop: float = 1.0,
                  chunk_seconds: float = CHUNK_SECONDS,
                  overlap_seconds: float = OVERLAP_SECONDS,
                  top_proposals: int = 64, score_threshold: float = 0.05,
                  iou_threshold: float = 0.5) -> DetectionResult:
    """channels: normalized (3, R, T) stack for a full recording."""
    result = DetectionResult()
    n_frames = channels.shape[2]
    starts, chunk_frames = chunk_starts(n_frames, frame_hop, chunk_seconds,
                                        overlap_seconds)
    raw: list[DetectedSegment] = []
    for s in starts:
        chunk = channels[:, :, s:s + chunk_frames]
        if chunk.shape[2] * frame_hop < MIN_CHUNK_SECONDS:
            result.skipped_short_chunks += 1
            continue
        t0 = s * frame_hop
        result.chunk_starts.append(t0)
        for seg in detect_chunk(model, chunk, frame_hop, top_proposals,
                                score_threshold):
            seg.t_start += t0
            seg.t_end += t0
            raw.append(seg)
    result.segments = nms_1d(raw, iou_threshold=iou_threshold,
                             score_threshold=score_threshold)
    return result
