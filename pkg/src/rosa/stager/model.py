"""Sleep-stage model: per-epoch conv encoder with a gated skip blend,
an LSTM over the epoch sequence, and a linear-chain transition matrix
for structured decoding."""
from __future__ import annotations

import numpy as np

from ..autodiff import Tensor, nn, ops
from ..cohort.types import SleepStage
from ..preproc.spectrogram import PreprocError, SpectrogramStack

N_STAGES = 5
EMBED_DIM = 16
HIDDEN_DIM = 24


def epoch_slices(stack: SpectrogramStack, epoch_len: float = 30.0) -> np.ndarray:
    """Cut the channel stack into staging epochs -> (N, 3, bins, frames).
    The trailing partial epoch is edge-padded, matching the epoch pooling."""
    frames_per_epoch = max(int(round(epoch_len / stack.frame_hop)), 1)
    duration = (stack.n_frames - 1) * stack.frame_hop + stack.frame_len
    n_epochs = int(duration // epoch_len)
    if n_epochs == 0:
        raise PreprocError("stack shorter than one staging epoch")
    needed = n_epochs * frames_per_epoch
    chans = stack.channels
    if chans.shape[2] < needed:
        pad = needed - chans.shape[2]
        chans = np.concatenate([chans, np.repeat(chans[:, :, -1:], pad, axis=2)], axis=2)
    trimmed = chans[:, :, :needed]
    per = trimmed.reshape(3, stack.n_bins, n_epochs, frames_per_epoch)
    return np.ascontiguousarray(per.transpose(2, 0, 1, 3))


class GatedBlend(nn.Module):
    """Sigmoid-gated convex blend of a deep path and a shallow skip path."""

    def __init__(self, c: int, rng: np.random.Generator):
        self.deep = nn.Conv2d(c, c, (3, 3), rng)
        self.gate = nn.Conv2d(c, c, (1, 1), rng)

    def __call__(self, x: Tensor) -> Tensor:
        u = self.deep(x).relu()
        g = self.gate(u + x).sigmoid()
        return g * u + (Tensor(1.0) - g) * x


class StagerModel(nn.Module):
    def __init__(self, seed: int = 0):
        rng = np.random.default_rng(seed)
        self.conv1 = nn.Conv2d(3, 8, (3, 3), rng, stride=(2, 2))
        self.blend = GatedBlend(8, rng)
        self.conv2 = nn.Conv2d(8, EMBED_DIM, (3, 3), rng, stride=(2, 2))
        self.lstm = nn.LSTM(EMBED_DIM, HIDDEN_DIM, rng)
        self.out = nn.Linear(HIDDEN_DIM, N_STAGES, rng)
        self.transitions = Tensor(np.zeros((N_STAGES, N_STAGES)), requires_grad=True)

    def embed_epochs(self, epochs: np.ndarray | Tensor) -> Tensor:
        """(N, 3, bins, frames) -> (N, EMBED_DIM) by global average pooling."""
        x = epochs if isinstance(epochs, Tensor) else Tensor(epochs)
        h = self.conv1(x).relu()
        h = self.blend(h)
        h = self.conv2(h).relu()
        return h.sum(axis=(2, 3)) / (h.shape[2] * h.shape[3])

    def forward_logits(self, epochs: np.ndarray | Tensor) -> Tensor:
        """(N, 3, bins, frames) -> (N, 5) stage logits."""
        emb = self.embed_epochs(epochs)
        hidden = self.lstm(emb)
        return self.out(hidden)

    def non_crf_parameters(self) -> dict[str, Tensor]:
        return {k: p for k, p in self.parameters().items() if k != "transitions"}


def forward_logits(model: StagerModel, epochs: np.ndarray) -> Tensor:
    if epochs.ndim != 4 or epochs.shape[0] < 1:
        raise PreprocError("expected (epochs, 3, bins, frames) input")
    return model.forward_logits(epochs)
