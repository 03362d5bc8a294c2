"""Light-weight oximetry classifier and decision-level score fusion."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..autodiff import Tensor, log_softmax, nn, softmax
from ..autodiff.optim import Adam, TrainConfig, cosine_lr
from ..cohort.types import AnnotatedEvent, Hypnogram, SleepStage
from ..detector.boxes import KIND_TO_INDEX, DetectedSegment, nms_1d
from .clean import CleanTrace
from .features import NO_OXIMETRY, SpO2Features, extract_features

MIN_EVENT_GAP_S = 90.0


class FusionError(RuntimeError):
    pass


class FusionNet(nn.Module):
    """Three fully connected layers: 4 features -> 5 class scores
    (non-SAE, CA, OA, MA, HP)."""

    def __init__(self, seed: int = 0):
        rng = np.random.default_rng(seed)
        self.fc1 = nn.Linear(4, 16, rng)
        self.fc2 = nn.Linear(16, 16, rng)
        self.fc3 = nn.Linear(16, 5, rng)
        self.trained = False

    def __call__(self, x: Tensor) -> Tensor:
        h = self.fc1(x).relu()
        h = self.fc2(h).relu()
        return self.fc3(h)

    def score(self, features: SpO2Features) -> float:
        """p_s = 1 - P(non-SAE)."""
        if not self.trained:
            raise FusionError("fusion network queried before training")
        logits = self(Tensor(features.vector()))
        probs = softmax(logits).data
        return float(1.0 - probs[0])


@dataclass
class FusionDataset:
    features: np.ndarray        # (n, 4)
    labels: np.ndarray          # (n,) ints, 0 = non-SAE
    sampled_with_replacement: bool = False


def _sleep_spans(hypnogram: Hypnogram) -> list[tuple[float, float]]:
    spans = []
    for i, s in enumerate(hypnogram.stages):
        if s is not SleepStage.W:
            spans.append((i * hypnogram.epoch_len, (i + 1) * hypnogram.epoch_len))
    return spans


def build_fusion_dataset(records: list[tuple[list[AnnotatedEvent], CleanTrace, Hypnogram]],
                         seed: int = 0, negative_duration: float = 20.0) -> FusionDataset:
    """Balanced dataset: every true event plus an equal count of event-free
    sleep windows at least 90 s clear of any event."""
    rng = np.random.default_rng(seed)
    feats: list[np.ndarray] = []
    labels: list[int] = []
    candidates: list[tuple[int, float]] = []  # (record index, window end time)
    for rec_i, (events, trace, hypnogram) in enumerate(records):
        for ev in events:
            f = extract_features(trace, DetectedSegment(
                kind=ev.kind, score=1.0, t_start=ev.t_start, t_end=ev.t_end))
            feats.append(f.vector())
            labels.append(KIND_TO_INDEX[ev.kind])
        for lo, hi in _sleep_spans(hypnogram):
            t = hi  # candidate window ends at an epoch boundary
            if t + 60.0 > len(trace):
                continue
            if all(abs(t - e.t_start) >= MIN_EVENT_GAP_S
                   and abs(t - e.t_end) >= MIN_EVENT_GAP_S for e in events):
                candidates.append((rec_i, t))
    n_pos = len(labels)
    replacement = len(candidates) < n_pos
    if candidates and n_pos:
        picks = rng.choice(len(candidates), size=n_pos, replace=replacement)
        for c in picks:
            rec_i, t = candidates[c]
            _, trace, _ = records[rec_i]
            f = extract_features(trace, DetectedSegment(
                kind=list(KIND_TO_INDEX)[0], score=1.0,
                t_start=t - negative_duration, t_end=t))
            feats.append(f.vector())
            labels.append(0)
    return FusionDataset(features=np.array(feats).reshape(-1, 4),
                         labels=np.array(labels, dtype=int),
                         sampled_with_replacement=replacement and bool(candidates))


def fusion_loss(net: FusionNet, features: np.ndarray, labels: np.ndarray) -> Tensor:
    logits = net(Tensor(features))
    logp = log_softmax(logits, axis=1)
    return logp[np.arange(len(labels)), labels].sum() * (-1.0 / len(labels))


def train_fusion(dataset: FusionDataset, config: TrainConfig,
                 net: FusionNet | None = None) -> FusionNet:
    if net is None:
        net = FusionNet(seed=config.seed)
    if len(dataset.labels) == 0:
        raise FusionError("empty fusion dataset")
    params = net.parameters()
    opt = Adam(config)
    for epoch in range(config.epochs):
        net.zero_grad()
        loss = fusion_loss(net, dataset.features, dataset.labels)
        if not np.isfinite(loss.item()):
            break
        loss.backward()
        opt.step(params, lr=cosine_lr(config, epoch))
    net.trained = True
    return net


def soft_fuse(segments: list[DetectedSegment], trace: CleanTrace, net: FusionNet,
              omega: float = 0.5, score_threshold: float = 0.05,
              iou_threshold: float = 0.5) -> list[DetectedSegment]:
    """p_f = omega * p_s + (1 - omega) * p_r, then re-threshold and re-merge.
    Windows without usable oximetry fall back to the radar score."""
    if not 0.0 <= omega <= 1.0:
        raise ValueError("omega must lie in [0, 1]")
    fused: list[DetectedSegment] = []
    for seg in segments:
        feats = extract_features(trace, seg)
        if not feats.valid:
            seg.spo2_score = None
            seg.fused_score = seg.score
        else:
            p_s = net.score(feats)
            seg.spo2_score = p_s
            seg.fused_score = omega * p_s + (1.0 - omega) * seg.score
        fused.append(seg)
    return nms_1d(fused, iou_threshold=iou_threshold,
                  score_threshold=score_threshold, use_fused=True)
