"""Channel normalization with train-split statistics (sklearn-style)."""
from __future__ import annotations

import json
from dataclasses import replace
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .spectrogram import SpectrogramStack

_LOG_EPS = 1e-12


class StackNormalizer(BaseEstimator, TransformerMixin):
    """Log-compress the two power channels, standardize them with training
    statistics, and scale the dominant-frequency channel by slow-rate Nyquist.

    With ``identity=True`` the transform is a no-op (useful to verify that
    already-normalized data passes through unchanged).
    """

    def __init__(self, identity: bool = False):
        self.identity = identity

    def fit(self, stacks: list[SpectrogramStack], y=None):
        if self.identity:
            return self
        logs = [np.log(s.channels[:2] + _LOG_EPS) for s in stacks]
        flat = np.concatenate([v.reshape(2, -1) for v in logs], axis=1)
        self.mean_ = flat.mean(axis=1)
        std = flat.std(axis=1)
        self.zero_variance_ = std < 1e-12
        std = np.where(self.zero_variance_, 1.0, std)  # unit-variance fallback
        self.std_ = std
        return self

    def transform(self, stacks):
        single = isinstance(stacks, SpectrogramStack)
        if single:
            stacks = [stacks]
        out = []
        for s in stacks:
            if self.identity:
                out.append(s)
                continue
            power = (np.log(s.channels[:2] + _LOG_EPS)
                     - self.mean_[:, None, None]) / self.std_[:, None, None]
            dom = s.channels[2:3] / (s.slow_rate / 2.0)
            flags = dict(s.flags)
            if self.zero_variance_.any():
                flags["zero_variance_channel"] = True
            out.append(replace(s, channels=np.concatenate([power, dom]), flags=flags))
        return out[0] if single else out

    def save(self, path):
        payload = {"identity": self.identity}
        if not self.identity:
            payload.update(mean=self.mean_.tolist(), std=self.std_.tolist(),
                           zero_variance=self.zero_variance_.tolist())
        Path(path).write_text(json.dumps(payload))

    @classmethod
    def load(cls, path) -> "StackNormalizer":
        payload = json.loads(Path(path).read_text())
        norm = cls(identity=payload["identity"])
        if not norm.identity:
            norm.mean_ = np.array(payload["mean"])
            norm.std_ = np.array(payload["std"])
            norm.zero_variance_ = np.array(payload["zero_variance"], dtype=bool)
        return norm


def dump_stack(stack: SpectrogramStack, path):
    """Flat binary tensor plus JSON shape descriptor, for golden-file tests."""
    path = Path(path)
    arr = np.ascontiguousarray(stack.channels, dtype="<f8")
    path.with_suffix(".bin").write_bytes(arr.tobytes())
    desc = {"shape": list(arr.shape), "dtype": "<f8", "frame_hop": stack.frame_hop,
            "frame_len": stack.frame_len, "range_window": list(stack.range_window),
            "slow_rate": stack.slow_rate}
    path.with_suffix(".json").write_text(json.dumps(desc, indent=1))


def load_stack(path) -> SpectrogramStack:
    path = Path(path)
    desc = json.loads(path.with_suffix(".json").read_text())
    arr = np.frombuffer(path.with_suffix(".bin").read_bytes(),
                        dtype=desc["dtype"]).reshape(desc["shape"]).copy()
    return SpectrogramStack(channels=arr, frame_hop=desc["frame_hop"],
                            frame_len=desc["frame_len"],
                            range_window=tuple(desc["range_window"]),
                            slow_rate=desc["slow_rate"])
