"""Pipeline configuration and content-hash keys for artifact caching."""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

SEVERITY_CYCLE = ("healthy", "mild", "moderate", "severe")
REPORT_SCHEMA_VERSION = 1


class ConfigError(ValueError):
    pass


@dataclass
class PipelineConfig:
    outdir: str = "rosa_out"
    seed: int = 0
    # cohort
    n_subjects: int = 8
    duration_s: float = 28800.0
    severities: tuple[str, ...] = SEVERITY_CYCLE
    radar_sample_rate: float = 16.0     # slow-time chirp rate (Hz)
    radar_fast_samples: int = 64
    # preprocessing
    frame_len: float = 30.0
    frame_hop: float = 1.0
    range_gate: tuple[float, float] = (0.3, 1.5)
    epoch_len: float = 30.0
    # cross-validation
    folds: int = 4
    # detector training
    detector_epochs: int = 6
    detector_lr: float = 1e-3
    detector_chunks_per_epoch: int | None = 120
    detector_eval_every: int = 2
    top_proposals: int = 64
    score_threshold: float = 0.05
    # stager training
    stager_stage1_epochs: int = 6
    stager_stage2_epochs: int = 3
    stager_lr: float = 3e-3
    # fusion
    fusion_epochs: int = 200
    fusion_lr: float = 5e-3
    omega: float = 0.5
    # event counting for AHI: operating threshold on the fused score and the
    # class-agnostic overlap at which two detections are one physical event
    count_threshold: float = 0.5
    count_iou: float = 0.3

    def __post_init__(self):
        if self.folds < 2:
            raise ConfigError("fold count must be >= 2")
        if self.n_subjects < self.folds:
            raise ConfigError("need at least one subject per fold")
        if not 0.0 <= self.omega <= 1.0:
            raise ConfigError("omega must lie in [0, 1]")
        unknown = set(self.severities) - set(SEVERITY_CYCLE)
        if unknown:
            raise ConfigError(f"unknown severities {sorted(unknown)}")
        self.severities = tuple(self.severities)
        self.range_gate = tuple(self.range_gate)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, payload: dict) -> "PipelineConfig":
        fields = {f for f in cls.__dataclass_fields__}
        unknown = set(payload) - fields
        if unknown:
            raise ConfigError(f"unknown config fields {sorted(unknown)}")
        return cls(**payload)

    @classmethod
    def load(cls, path: str | Path) -> "PipelineConfig":
        try:
            payload = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(payload)

    def save(self, path: str | Path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=1, sort_keys=True))

    # -- content hashing ----------------------------------------------------

    def _subset(self, keys: tuple[str, ...]) -> dict:
        d = self.to_dict()
        return {k: d[k] for k in keys}

    def cohort_key(self, subject: int) -> str:
        return content_key(self._subset(("seed", "duration_s", "severities",
                                         "radar_sample_rate", "radar_fast_samples")),
                           subject=subject)

    def stack_key(self, subject: int) -> str:
        return content_key(self.cohort_key(subject),
                           self._subset(("frame_len", "frame_hop", "range_gate")))

    def training_key(self, fold: int) -> str:
        upstream = [self.stack_key(i) for i in range(self.n_subjects)]
        return content_key(upstream, fold=fold,
                           **self._subset(("folds", "detector_epochs", "detector_lr",
                                           "detector_chunks_per_epoch",
                                           "detector_eval_every", "top_proposals",
                                           "score_threshold", "stager_stage1_epochs",
                                           "stager_stage2_epochs", "stager_lr",
                                           "fusion_epochs", "fusion_lr",
                                           "epoch_len")))

    def inference_key(self, subject: int, fold: int) -> str:
        return content_key(self.training_key(fold), self.stack_key(subject),
                           omega=self.omega, count_threshold=self.count_threshold,
                           count_iou=self.count_iou)


def content_key(*parts, **kv) -> str:
    payload = json.dumps([parts, kv], sort_keys=True, default=str)
    return hashlib.sha256(payload.encode()).hexdigest()[:12]
