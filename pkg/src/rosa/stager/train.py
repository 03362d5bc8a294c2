"""Two-stage stager training: the structured-decoding transition scores are
frozen (and their loss term disabled) in stage one, then trained jointly in
stage two."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..autodiff import Tensor
from ..autodiff.optim import Adam, TrainConfig, cosine_lr
from ..cohort.types import GRANULARITIES, Hypnogram, SleepStage
from .losses import change_loss, crf_loss, duration_loss, focal_loss, total_loss
from .model import StagerModel


@dataclass
class StagerTrainResult:
    model: StagerModel
    history: list[dict] = field(default_factory=list)
    diverged: bool = False
    stage1_epochs: int = 0
    stage2_epochs: int = 0


def stage_weight_vector(hypnograms: list[np.ndarray]) -> np.ndarray:
    """Inverse-frequency focal weights over the five stages, mean 1 over the
    stages that occur."""
    counts = np.zeros(5)
    for stages in hypnograms:
        for s in stages:
            counts[int(s)] += 1
    weights = np.ones(5)
    present = counts > 0
    if present.any():
        inv = np.where(present, 1.0 / np.maximum(counts, 1), 0.0)
        weights[present] = (inv / inv[present].mean())[present]
    return weights


def _sequence_loss(model: StagerModel, epochs: np.ndarray, stages: np.ndarray,
                   weights: np.ndarray, eta: float, alpha: float, beta: float,
                   gamma: float, t_min, d: float) -> Tensor:
    logits = model.forward_logits(epochs)
    focal = focal_loss(logits, stages, weights)
    change = change_loss(logits)
    duration = duration_loss(logits, t_min=t_min, d=d)
    crf = crf_loss(logits, model.transitions, stages) if eta != 0.0 else Tensor(0.0)
    return total_loss(focal, change, duration, crf,
                      alpha=alpha, beta=beta, gamma=gamma, eta=eta)


def two_stage_train(records: list[tuple[np.ndarray, np.ndarray]],
                    config: TrainConfig, stage1_epochs: int = 100,
                    stage2_epochs: int = 100, alpha: float = 1.0,
                    beta: float = 1.0, gamma: float = 1.0,
                    t_min=None, d: float = 30.0,
                    model: StagerModel | None = None) -> StagerTrainResult:
    """records: (epoch slices (N,3,R,F), truth stage indices (N,)) pairs."""
    rng = np.random.default_rng(config.seed)
    if model is None:
        model = StagerModel(seed=config.seed)
    weights = stage_weight_vector([st for _, st in records])
    result = StagerTrainResult(model=model, stage1_epochs=stage1_epochs,
                               stage2_epochs=stage2_epochs)
    last_good: dict[str, np.ndarray] | None = None
    all_params = model.parameters()

    for stage, (n_epochs, eta, params) in enumerate(
            [(stage1_epochs, 0.0, model.non_crf_parameters()),
             (stage2_epochs, 1.0, all_params)], start=1):
        opt = Adam(config)
        sched = TrainConfig(lr=config.lr, lr_min=config.lr_min, epochs=max(n_epochs, 1),
                            seed=config.seed)
        for epoch in range(n_epochs):
            lr = cosine_lr(sched, epoch)
            order = rng.permutation(len(records))
            losses = []
            for idx in order:
                epochs_arr, stages = records[idx]
                model.zero_grad()
                loss = _sequence_loss(model, epochs_arr, stages, weights, eta,
                                      alpha, beta, gamma, t_min, d)
                if not np.isfinite(loss.item()):
                    result.diverged = True
                    break
                loss.backward()
                opt.step(params, lr=lr)
                losses.append(loss.item())
            if result.diverged:
                break
            last_good = {k: p.data.copy() for k, p in all_params.items()}
            result.history.append({"stage": stage, "epoch": epoch, "eta": eta,
                                   "lr": lr, "train_loss": float(np.mean(losses))})
        if result.diverged:
            break

    if result.diverged and last_good is not None:
        for k, p in all_params.items():
            p.data = last_good[k].copy()
    return result


def decode_hypnogram(model: StagerModel, epochs: np.ndarray,
                     epoch_len: float = 30.0) -> Hypnogram:
    from .losses import viterbi_decode
    logits = model.forward_logits(epochs).data
    path = viterbi_decode(logits, model.transitions.data)
    return Hypnogram(stages=[SleepStage(int(s)) for s in path], epoch_len=epoch_len)


def predict_hypnogram_and_tst(model: StagerModel, epochs: np.ndarray,
                              granularity: str = "WRNN",
                              epoch_len: float = 30.0) -> tuple[list[str], float]:
    """Structured decode of the epoch sequence, mapped to the requested
    granularity; TST in hours counts non-Wake epochs."""
    if granularity not in GRANULARITIES:
        raise ValueError(f"unknown granularity {granularity!r}")
    hyp = decode_hypnogram(model, epochs, epoch_len)
    return hyp.mapped(granularity), hyp.tst_hours()
