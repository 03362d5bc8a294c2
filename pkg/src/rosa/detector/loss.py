"""Detection loss: anchor matching, proposal objectness/regression loss and
the classification/regression loss of the shared head."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..autodiff import Tensor, concatenate, log_softmax
from ..cohort.types import AnnotatedEvent
from .anchors import anchors_as_arrays
from .boxes import KIND_TO_INDEX, Anchor, encode_offsets, iou_matrix
from .model import DetectorModel

POSITIVE_IOU = 0.5
NEGATIVE_IOU = 0.3
MAX_HEAD_ROIS = 24


def smooth_l1(diff: Tensor) -> Tensor:
    """Elementwise smooth-L1 (0.5 d^2 inside |d|<1, |d|-0.5 outside)."""
    inside = (np.abs(diff.data) < 1.0).astype(np.float64)
    quad = 0.5 * diff * diff
    lin = diff.abs() - 0.5
    return Tensor(inside) * quad + Tensor(1.0 - inside) * lin


def binary_ce_with_logits(logits: Tensor, targets: np.ndarray) -> Tensor:
    """Numerically stable per-element binary cross-entropy."""
    y = Tensor(targets)
    return logits.relu() - logits * y + ((logits.abs() * -1.0).exp() + 1.0).log()


def flatten_spn(model: DetectorModel, spn_out: list[Tensor],
                time_len: float) -> tuple[dict, Tensor, Tensor, Tensor]:
    """Align per-level SPN maps with the anchor grid.

    Returns (anchor arrays, objectness logits, t_x, t_w), each flat in
    level-major / time-major / scale-minor anchor order.
    """
    obj, tx, tw = [], [], []
    all_anchors = []
    for level, (stride, scales, out) in enumerate(zip(model.level_strides,
                                                      model.scales, spn_out)):
        n_steps = min(out.shape[1], int(time_len // stride))
        n_scales = len(scales)
        trimmed = out[:, :n_steps]
        per = trimmed.reshape(n_scales, 3, n_steps).transpose(2, 0, 1).reshape(-1, 3)
        obj.append(per[:, 0])
        tx.append(per[:, 1])
        tw.append(per[:, 2])
        for i in range(n_steps):
            center = (i + 0.5) * stride
            for w in scales:
                all_anchors.append(Anchor(x_a=center, w_a=w, level=level))
    arrays = anchors_as_arrays(all_anchors)
    return arrays, concatenate(obj), concatenate(tx), concatenate(tw)


def match_anchors(anchor_intervals: np.ndarray,
                  gt_intervals: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Returns (labels, matched gt index). labels: 1 positive, 0 negative,
    -1 ignored. Every gt is guaranteed its best-IoU anchor."""
    n = len(anchor_intervals)
    labels = np.zeros(n, dtype=int)
    matched = np.full(n, -1, dtype=int)
    if len(gt_intervals) == 0:
        return labels, matched
    ious = iou_matrix(anchor_intervals, gt_intervals)
    best_gt = np.argmax(ious, axis=1)
    best_iou = ious[np.arange(n), best_gt]
    labels[(best_iou >= NEGATIVE_IOU) & (best_iou < POSITIVE_IOU)] = -1
    pos = best_iou >= POSITIVE_IOU
    labels[pos] = 1
    matched[pos] = best_gt[pos]
    for j in range(len(gt_intervals)):
        i = int(np.argmax(ious[:, j]))
        if ious[i, j] > 0:
            labels[i] = 1
            matched[i] = j
    return labels, matched


@dataclass
class LossParts:
    spn_cls: float
    spn_reg: float
    head_cls: float
    head_reg: float

    @property
    def total(self) -> float:
        return self.spn_cls + self.spn_reg + self.head_cls + self.head_reg


def detection_loss(model: DetectorModel, chunk: Tensor, events: list[AnnotatedEvent],
                   class_weights: np.ndarray | None = None,
                   rng: np.random.Generator | None = None,
                   frame_hop: float = 1.0) -> tuple[Tensor, LossParts]:
    """Full detection loss for one stack chunk (3, R, T)."""
    rng = rng or np.random.default_rng(0)
    time_len = chunk.shape[2] * frame_hop
    pyr = model.pyramid(chunk)
    spn_out = model.spn_outputs(pyr)
    arrays, obj, tx, tw = flatten_spn(model, spn_out, time_len)
    gt = np.array([[e.t_start, e.t_end] for e in events]).reshape(-1, 2)
    labels, matched = match_anchors(arrays["interval"], gt)

    zero = Tensor(0.0)
    pos_idx = np.flatnonzero(labels == 1)
    neg_idx = np.flatnonzero(labels == 0)
    terms: list[Tensor] = []

    # SPN objectness: balanced mean over positives and negatives
    if len(pos_idx):
        terms.append(binary_ce_with_logits(obj[pos_idx], np.ones(len(pos_idx))).mean())
    if len(neg_idx):
        # keep the negative set bounded; deterministic subsample
        if len(neg_idx) > 4 * max(len(pos_idx), 16):
            neg_idx = rng.choice(neg_idx, size=4 * max(len(pos_idx), 16), replace=False)
            neg_idx.sort()
        terms.append(binary_ce_with_logits(obj[neg_idx], np.zeros(len(neg_idx))).mean())
    spn_cls = sum(terms, zero)

    # SPN regression on positives
    if len(pos_idx) and len(gt):
        t_targets = np.array([
            encode_offsets(arrays["center"][i], arrays["width"][i],
                           0.5 * (gt[matched[i]][0] + gt[matched[i]][1]),
                           gt[matched[i]][1] - gt[matched[i]][0])
            for i in pos_idx])
        spn_reg = (smooth_l1(tx[pos_idx] - Tensor(t_targets[:, 0])).mean()
                   + smooth_l1(tw[pos_idx] - Tensor(t_targets[:, 1])).mean())
    else:
        spn_reg = zero

    # head: classify anchor boxes matched to gt plus sampled negatives
    if class_weights is None:
        class_weights = np.ones(5)
    lateral = model.lateral_maps(pyr)
    rois: list[tuple[int, float, float, int, tuple[float, float] | None]] = []
    if len(pos_idx):
        chosen = pos_idx if len(pos_idx) <= MAX_HEAD_ROIS // 2 else \
            np.sort(rng.choice(pos_idx, size=MAX_HEAD_ROIS // 2, replace=False))
        for i in chosen:
            ev = events[matched[i]]
            cls = KIND_TO_INDEX[ev.kind]
            target = encode_offsets(arrays["center"][i], arrays["width"][i],
                                    ev.midpoint, ev.duration)
            lo, hi = arrays["interval"][i]
            rois.append((int(arrays["level"][i]), lo, hi, cls, target))
    if len(neg_idx):
        n_neg = min(len(neg_idx), max(len(rois), 4))
        for i in np.sort(rng.choice(neg_idx, size=n_neg, replace=False)):
            lo, hi = arrays["interval"][i]
            rois.append((int(arrays["level"][i]), lo, hi, 0, None))

    head_cls_terms: list[Tensor] = []
    head_reg_terms: list[Tensor] = []
    for level, lo, hi, cls, target in rois:
        lo_c = max(lo, 0.0)
        hi_c = min(hi, time_len)
        if hi_c <= lo_c:
            continue
        logits, r_tx, r_tw = model.classify_roi(
            lateral[level], model.level_strides[level] * 1.0, lo_c, hi_c)
        logp = log_softmax(logits)
        head_cls_terms.append(logp[cls] * -class_weights[cls])
        if target is not None:
            head_reg_terms.append(smooth_l1(r_tx[cls] - target[0])
                                  + smooth_l1(r_tw[cls] - target[1]))
    head_cls = sum(head_cls_terms, zero) / max(len(head_cls_terms), 1)
    head_reg = sum(head_reg_terms, zero) / max(len(head_reg_terms), 1)

    total = spn_cls + spn_reg + head_cls + head_reg
    parts = LossParts(spn_cls.item(), spn_reg.item() if isinstance(spn_reg, Tensor) else 0.0,
                      head_cls.item(), head_reg.item())
    return total, parts
