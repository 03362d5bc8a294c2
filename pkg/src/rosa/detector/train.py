"""Event-detector training loop: chunked sampling, Adam with cosine
annealing, best-validation checkpointing and divergence recovery."""
from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from ..autodiff import Tensor
from ..autodiff.optim import Adam, TrainConfig, cosine_lr
from ..cohort.types import AnnotatedEvent
from .boxes import KIND_TO_INDEX, iou_1d
from .infer import chunk_starts, detect_events
from .loss import detection_loss
from .model import DetectorModel


@dataclass
class TrainingChunk:
    channels: np.ndarray        # (3, R, T) normalized
    events: list[AnnotatedEvent]
    frame_hop: float


@dataclass
class DetectorTrainResult:
    model: DetectorModel
    history: list[dict] = field(default_factory=list)
    best_score: float = -np.inf
    best_epoch: int = -1
    diverged: bool = False


def class_weight_vector(event_lists: list[list[AnnotatedEvent]]) -> np.ndarray:
    """Inverse-frequency weights for the 5-way head, normal class pinned at 1.
    Present classes are scaled so their mean weight is 1."""
    counts = np.zeros(5)
    for events in event_lists:
        for ev in events:
            counts[KIND_TO_INDEX[ev.kind]] += 1
    weights = np.ones(5)
    present = counts > 0
    if present.any():
        inv = np.where(present, 1.0 / np.maximum(counts, 1), 0.0)
        inv = np.where(present, inv / inv[present].mean(), 0.0)
        weights[present] = inv[present]
    return weights


def build_training_chunks(records: list[tuple[np.ndarray, list[AnnotatedEvent]]],
                          frame_hop: float = 1.0, chunk_seconds: float = 600.0,
                          overlap_seconds: float = 60.0) -> list[TrainingChunk]:
    """Slice each recording into overlapped chunks with chunk-local events.
    Events keep their chunk-clipped extent when at least half remains."""
    chunks: list[TrainingChunk] = []
    for channels, events in records:
        starts, chunk_frames = chunk_starts(channels.shape[2], frame_hop,
                                            chunk_seconds, overlap_seconds)
        for s in starts:
            t0 = s * frame_hop
            t1 = (s + chunk_frames) * frame_hop
            local: list[AnnotatedEvent] = []
            for ev in events:
                lo = max(ev.t_start, t0)
                hi = min(ev.t_end, t1)
                if hi - lo >= 0.5 * ev.duration and hi > lo:
                    local.append(AnnotatedEvent(kind=ev.kind, t_start=lo - t0,
                                                t_end=hi - t0))
            chunks.append(TrainingChunk(channels[:, :, s:s + chunk_frames],
                                        local, frame_hop))
    return chunks


def _validation_ap(model: DetectorModel, records, frame_hop: float,
                   top_proposals: int) -> float:
    """Class-agnostic AP at IoU 0.5 over the validation recordings."""
    scored: list[tuple[float, int, tuple[float, float]]] = []
    truths: list[list[tuple[float, float]]] = []
    for rec_i, (channels, events) in enumerate(records):
        truths.append([(ev.t_start, ev.t_end) for ev in events])
        result = detect_events(model, channels, frame_hop,
                               top_proposals=top_proposals)
        for seg in result.segments:
            scored.append((seg.score, rec_i, seg.interval))
    n_truth = sum(len(t) for t in truths)
    if n_truth == 0:
        return 0.0
    scored.sort(key=lambda r: (-r[0], r[1], r[2]))
    used = [set() for _ in truths]
    tp = np.zeros(len(scored))
    for k, (_, rec_i, interval) in enumerate(scored):
        best, best_j = 0.0, -1
        for j, truth in enumerate(truths[rec_i]):
            if j in used[rec_i]:
                continue
            v = iou_1d(interval, truth)
            if v > best:
                best, best_j = v, j
        if best >= 0.5:
            used[rec_i].add(best_j)
            tp[k] = 1.0
    if len(tp) == 0:
        return 0.0
    cum_tp = np.cumsum(tp)
    precision = cum_tp / np.arange(1, len(tp) + 1)
    recall = cum_tp / n_truth
    # all-points interpolation: precision envelope from the right
    env = np.maximum.accumulate(precision[::-1])[::-1]
    ap = 0.0
    prev_r = 0.0
    for r, p in zip(recall, env):
        ap += (r - prev_r) * p
        prev_r = r
    return float(ap)


def train_detector(train_records: list[tuple[np.ndarray, list[AnnotatedEvent]]],
                   val_records: list[tuple[np.ndarray, list[AnnotatedEvent]]],
                   config: TrainConfig, frame_hop: float = 1.0,
                   chunk_seconds: float = 600.0, overlap_seconds: float = 60.0,
                   chunks_per_epoch: int | None = None, eval_every: int = 1,
                   top_proposals: int = 64,
                   model: DetectorModel | None = None) -> DetectorTrainResult:
    rng = np.random.default_rng(config.seed)
    chunks = build_training_chunks(train_records, frame_hop, chunk_seconds,
                                   overlap_seconds)
    if not chunks:
        raise ValueError("no training chunks")
    n_range_bins = train_records[0][0].shape[1]
    if model is None:
        model = DetectorModel(n_range_bins, seed=config.seed)
    weights = class_weight_vector([ev for _, ev in train_records])
    params = model.parameters()
    opt = Adam(config)
    result = DetectorTrainResult(model=model)
    best_state: dict[str, np.ndarray] | None = None

    for epoch in range(config.epochs):
        lr = cosine_lr(config, epoch)
        order = rng.permutation(len(chunks))
        if chunks_per_epoch is not None:
            order = order[:chunks_per_epoch]
        losses = []
        for idx in order:
            ch = chunks[idx]
            model.zero_grad()
            loss, _ = detection_loss(model, Tensor(ch.channels), ch.events,
                                     class_weights=weights, rng=rng,
                                     frame_hop=ch.frame_hop)
            if not np.isfinite(loss.item()):
                result.diverged = True
                break
            loss.backward()
            opt.step(params, lr=lr)
            losses.append(loss.item())
        if result.diverged:
            break
        entry = {"epoch": epoch, "lr": lr,
                 "train_loss": float(np.mean(losses)) if losses else np.nan}
        if val_records and (epoch % eval_every == 0 or epoch == config.epochs - 1):
            score = _validation_ap(model, val_records, frame_hop, top_proposals)
            entry["val_ap"] = score
            if score > result.best_score:
                result.best_score = score
                result.best_epoch = epoch
                best_state = {k: p.data.copy() for k, p in params.items()}
        result.history.append(entry)

    if best_state is not None:
        for k, p in params.items():
            p.data = best_state[k].copy()
    return result
