"""Average precision for 1-D temporal detections at a fixed IoU threshold."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..cohort.types import AnnotatedEvent
from ..detector.boxes import CLASS_NAMES, KIND_TO_INDEX, DetectedSegment, iou_1d
from .agreement import MetricsError


@dataclass
class ApReport:
    """AP over the pooled detections plus class-wise values. ``None`` marks
    an undefined AP (no truths of that class)."""
    overall: float | None
    per_class: dict[str, float | None]
    n_truths: int
    n_detections: int


def _envelope_ap(tp: np.ndarray, n_truth: int) -> float:
    if len(tp) == 0 or n_truth == 0:
        return 0.0
    cum_tp = np.cumsum(tp)
    precision = cum_tp / np.arange(1, len(tp) + 1)
    recall = cum_tp / n_truth
    env = np.maximum.accumulate(precision[::-1])[::-1]
    ap = 0.0
    prev = 0.0
    for r, p in zip(recall, env):
        ap += (r - prev) * p
        prev = r
    return float(ap)


def _match_flags(detections: list[tuple[int, DetectedSegment]],
                 truths: list[tuple[int, AnnotatedEvent]], iou_thr: float,
                 use_fused: bool) -> np.ndarray:
    """Greedy same-class matching in descending score order; each truth is
    consumed at most once; best IoU wins among its unmatched candidates."""
    def score(seg: DetectedSegment) -> float:
        return seg.effective_score if use_fused else seg.score

    order = sorted(range(len(detections)),
                   key=lambda i: (-score(detections[i][1]),
                                  detections[i][1].t_start, i))
    used = set()
    tp = np.zeros(len(detections))
    for rank, i in enumerate(order):
        rec, seg = detections[i]
        best, best_j = 0.0, -1
        for j, (t_rec, ev) in enumerate(truths):
            if j in used or t_rec != rec or ev.kind is not seg.kind:
                continue
            v = iou_1d(seg.interval, (ev.t_start, ev.t_end))
            if v > best:
                best, best_j = v, j
        if best >= iou_thr:
            used.add(best_j)
            tp[rank] = 1.0
    return tp


def average_precision_at_iou(detections: list[tuple[int, DetectedSegment]],
                             truths: list[tuple[int, AnnotatedEvent]],
                             iou_thr: float = 0.5,
                             use_fused: bool = False) -> ApReport:
    """detections/truths as (recording id, item) pairs pooled over recordings."""
    per_class: dict[str, float | None] = {}
    for name in CLASS_NAMES[1:]:
        cls_truths = [(r, e) for r, e in truths
                      if KIND_TO_INDEX[e.kind] == CLASS_NAMES.index(name)]
        cls_dets = [(r, s) for r, s in detections
                    if KIND_TO_INDEX[s.kind] == CLASS_NAMES.index(name)]
        if not cls_truths:
            per_class[name] = None
            continue
        tp = _match_flags(cls_dets, cls_truths, iou_thr, use_fused)
        per_class[name] = _envelope_ap(tp, len(cls_truths))
    if not truths:
        overall = None
    else:
        tp = _match_flags(detections, truths, iou_thr, use_fused)
        overall = _envelope_ap(tp, len(truths))
    return ApReport(overall=overall, per_class=per_class,
                    n_truths=len(truths), n_detections=len(detections))
