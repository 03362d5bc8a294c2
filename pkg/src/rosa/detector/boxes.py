"""1D interval math for temporal event detection: IoU, anchor offset
encoding/decoding, final segment decoding and class-wise NMS."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..cohort.types import EventKind

CLASS_NAMES = ["Normal", "CA", "OA", "MA", "HP"]
CLASS_TO_INDEX = {name: i for i, name in enumerate(CLASS_NAMES)}
KIND_TO_INDEX = {EventKind.CA: 1, EventKind.OA: 2, EventKind.MA: 3, EventKind.HP: 4}
INDEX_TO_KIND = {v: k for k, v in KIND_TO_INDEX.items()}


class BoxError(ValueError):
    pass


@dataclass(frozen=True)
class Anchor:
    x_a: float   # center, s
    w_a: float   # width, s
    level: int

    def __post_init__(self):
        if self.w_a <= 0:
            raise BoxError(f"anchor width must be positive, got {self.w_a}")

    @property
    def interval(self) -> tuple[float, float]:
        return (self.x_a - self.w_a / 2.0, self.x_a + self.w_a / 2.0)


@dataclass
class DetectedSegment:
    kind: EventKind
    score: float        # p_r, the winning-class probability
    t_start: float
    t_end: float
    spo2_score: float | None = None   # p_s once fusion runs
    fused_score: float | None = None  # p_f

    def __post_init__(self):
        if self.t_end <= self.t_start:
            raise BoxError("segment end must exceed start")

    @property
    def interval(self) -> tuple[float, float]:
        return (self.t_start, self.t_end)

    @property
    def effective_score(self) -> float:
        return self.fused_score if self.fused_score is not None else self.score


def iou_1d(a: tuple[float, float], b: tuple[float, float]) -> float:
    inter = min(a[1], b[1]) - max(a[0], b[0])
    if inter <= 0:
        return 0.0
    union = (a[1] - a[0]) + (b[1] - b[0]) - inter
    if union <= 0:
        return 0.0  # degenerate zero-length intervals
    return inter / union


def iou_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """a: (N, 2), b: (M, 2) interval endpoints -> (N, M) IoU."""
    if len(a) == 0 or len(b) == 0:
        return np.zeros((len(a), len(b)))
    inter = (np.minimum(a[:, None, 1], b[None, :, 1])
             - np.maximum(a[:, None, 0], b[None, :, 0]))
    inter = np.clip(inter, 0.0, None)
    union = ((a[:, 1] - a[:, 0])[:, None] + (b[:, 1] - b[:, 0])[None, :] - inter)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(union > 0, inter / union, 0.0)
    return out


def encode_offsets(anchor_center: float, anchor_width: float,
                   gt_center: float, gt_width: float) -> tuple[float, float]:
    """Invert the anchor parameterization x = x_a + t_x w_a, w = w_a exp t_w."""
    if anchor_width <= 0 or gt_width <= 0:
        raise BoxError("widths must be positive")
    return (gt_center - anchor_center) / anchor_width, float(np.log(gt_width / anchor_width))


def decode_center_width(anchor_center: float, anchor_width: float,
                        t_x: float, t_w: float) -> tuple[float, float]:
    return anchor_center + t_x * anchor_width, anchor_width * float(np.exp(t_w))


def decode_segment(x: float, w: float, class_probs: np.ndarray,
                   t_x: np.ndarray, t_w: np.ndarray) -> DetectedSegment | None:
    """Final decode from the head outputs: winning class, its score, and the
    class-specific boundary refinement. Returns None for the Normal class or
    a degenerate interval."""
    c = int(np.argmax(class_probs))
    if c == 0:
        return None
    p_r = float(class_probs[c])
    half = w * float(np.exp(t_w[c])) / 2.0
    center = x + float(t_x[c]) * w
    t_start = center - half
    t_end = center + half
    if t_end <= t_start:
        return None
    return DetectedSegment(kind=INDEX_TO_KIND[c], score=p_r, t_start=t_start, t_end=t_end)


def nms_1d(segments: list[DetectedSegment], iou_threshold: float = 0.5,
           score_threshold: float = 0.05, use_fused: bool = False,
           class_agnostic: bool = False) -> list[DetectedSegment]:
    """Greedy class-wise NMS by descending score; ties broken by earlier start.
    ``class_agnostic`` suppresses across classes, for counting distinct
    physical events rather than scoring per-class proposals."""
    def score_of(s: DetectedSegment) -> float:
        return s.effective_score if use_fused else s.score

    kept: list[DetectedSegment] = []
    pool = [s for s in segments if score_of(s) >= score_threshold]
    pool.sort(key=lambda s: (-score_of(s), s.t_start, s.t_end))
    for cand in pool:
        suppressed = False
        for k in kept:
            if ((class_agnostic or k.kind is cand.kind)
                    and iou_1d(k.interval, cand.interval) >= iou_threshold):
                suppressed = True
                break
        if not suppressed:
            kept.append(cand)
    kept.sort(key=lambda s: (s.t_start, s.t_end))
    return kept
