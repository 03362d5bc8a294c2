"""Domain types shared across the pipeline."""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

C_LIGHT = 299_792_458.0


class CohortError(ValueError):
    """Invalid subject profile or plan."""


@dataclass(frozen=True)
class RadarConfig:
    """FMCW radar parameters (defaults: 60 GHz AiP module, 3 GHz sweep)."""
    f0: float = 60e9          # carrier frequency, Hz
    B: float = 3e9            # sweep bandwidth, Hz
    F: float = 250.0          # frame (chirp) rate, chirps/s
    n: int = 256              # fast-time samples per chirp
    T_r: float = 1e-4         # chirp duration, s
    c: float = C_LIGHT

    def __post_init__(self):
        if self.n < 2 or (self.n & (self.n - 1)) != 0:
            raise CohortError(f"samples per chirp must be a power of two >= 2, got {self.n}")
        if self.F > 1.0 / self.T_r + 1e-9:
            raise CohortError("frame rate exceeds 1/T_r")
        if min(self.f0, self.B, self.F, self.T_r) <= 0:
            raise CohortError("radar parameters must be positive")

    @property
    def lambda0(self) -> float:
        return self.c / self.f0

    @property
    def K(self) -> float:
        """Chirp slope, Hz/s."""
        return self.B / self.T_r

    @property
    def fast_rate(self) -> float:
        """Fast-time sampling rate, Hz."""
        return self.n / self.T_r

    @property
    def range_resolution(self) -> float:
        return self.c / (2.0 * self.B)

    @property
    def max_unambiguous_range(self) -> float:
        """Range at which the beat frequency hits fast-time Nyquist."""
        return self.c * self.fast_rate / (4.0 * self.K)


class EventKind(enum.Enum):
    CA = "CA"
    OA = "OA"
    MA = "MA"
    HP = "HP"


APNEA_KINDS = frozenset({EventKind.CA, EventKind.OA, EventKind.MA})

MIN_EVENT_DURATION = 10.0  # s


@dataclass(frozen=True)
class AnnotatedEvent:
    kind: EventKind
    t_start: float
    t_end: float

    def __post_init__(self):
        if self.t_end <= self.t_start:
            raise CohortError(f"event end {self.t_end} <= start {self.t_start}")

    @property
    def duration(self) -> float:
        return self.t_end - self.t_start

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.t_start + self.t_end)


class SleepStage(enum.Enum):
    W = 0
    R = 1
    N1 = 2
    N2 = 3
    N3 = 4


STAGES = list(SleepStage)

# granularity mappings: finer stage -> coarse label
WS_MAP = {SleepStage.W: "W", SleepStage.R: "S", SleepStage.N1: "S",
          SleepStage.N2: "S", SleepStage.N3: "S"}
WRLD_MAP = {SleepStage.W: "W", SleepStage.R: "R", SleepStage.N1: "L",
            SleepStage.N2: "L", SleepStage.N3: "D"}
WRNN_MAP = {s: s.name for s in SleepStage}

GRANULARITIES = {"WS": WS_MAP, "WRLD": WRLD_MAP, "WRNN": WRNN_MAP}


@dataclass
class Hypnogram:
    stages: list[SleepStage]
    epoch_len: float = 30.0

    def __post_init__(self):
        if not self.stages:
            raise CohortError("hypnogram must be non-empty")

    def mapped(self, granularity: str) -> list[str]:
        try:
            mapping = GRANULARITIES[granularity]
        except KeyError:
            raise CohortError(f"unknown granularity {granularity!r}") from None
        return [mapping[s] for s in self.stages]

    def tst_hours(self) -> float:
        non_wake = sum(1 for s in self.stages if s is not SleepStage.W)
        return non_wake * self.epoch_len / 3600.0

    def stage_at(self, t: float) -> SleepStage:
        idx = min(int(t // self.epoch_len), len(self.stages) - 1)
        return self.stages[idx]


@dataclass
class SpO2Trace:
    """1 Hz integer-percent oxygen saturation samples."""
    samples: np.ndarray  # uint8

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.uint8)

    @property
    def valid(self) -> np.ndarray:
        return (self.samples != 0) & (self.samples != 255)

    def __len__(self):
        return len(self.samples)


@dataclass
class BeatSignalCube:
    """Complex beat-signal matrix, fast time x slow time."""
    values: np.ndarray  # complex64, shape (n_fast, n_slow)
    config: RadarConfig

    def __post_init__(self):
        if self.values.shape[0] != self.config.n:
            raise CohortError("beat cube fast-time dimension inconsistent with config")

    @property
    def n_chirps(self) -> int:
        return self.values.shape[1]

    @property
    def duration(self) -> float:
        return self.n_chirps / self.config.F


@dataclass
class SubjectRecord:
    subject_id: str
    config: RadarConfig
    beat: BeatSignalCube
    spo2: SpO2Trace
    truth_events: list[AnnotatedEvent]
    truth_hypnogram: Hypnogram

    def __post_init__(self):
        starts = [e.t_start for e in self.truth_events]
        if starts != sorted(starts):
            raise CohortError("truth events must be sorted by start time")


@dataclass(frozen=True)
class PlannedEvent:
    kind: EventKind
    start: float
    duration: float

    @property
    def end(self) -> float:
        return self.start + self.duration


@dataclass(frozen=True)
class OdCoupling:
    """Per-event desaturation coupling: depth (integer %), onset delay (s)."""
    depth: int = 4
    delay: float = 15.0
    coupled: bool = True


@dataclass
class SubjectProfile:
    seed: int
    duration: float = 600.0           # s
    bed_range: float = 0.8            # m
    breathing_rate: float = 0.25      # Hz
    breathing_amplitude: float = 0.004  # m chest displacement
    event_plan: list[PlannedEvent] = field(default_factory=list)
    stage_plan: list[SleepStage] | None = None
    od_coupling: list[OdCoupling] | None = None  # parallel to event_plan
    artifact_plan: list[tuple[int, int]] = field(default_factory=list)  # (t s, 0|255)
    spo2_baseline: int = 97
    snr_db: float = 20.0
    noise_free: bool = False
    fluctuation_count: int = 0        # sub-10 s, 1% dips to exercise suppression
    epoch_len: float = 30.0

    def validate(self):
        if self.duration < self.epoch_len:
            raise CohortError("duration shorter than one epoch")
        if not (0.0 < self.breathing_amplitude <= 0.05):
            raise CohortError("breathing amplitude must be in (0, 0.05] m")
        if not (0.1 <= self.breathing_rate <= 5.0):
            raise CohortError("breathing rate outside the 0.1-5 Hz respiration band")
        prev_end = -np.inf
        for ev in sorted(self.event_plan, key=lambda e: e.start):
            if ev.duration < MIN_EVENT_DURATION:
                raise CohortError(f"event at {ev.start}s shorter than "
                                  f"{MIN_EVENT_DURATION}s minimum")
            if ev.start < prev_end:
                raise CohortError(f"overlapping events near t={ev.start}s")
            if ev.end > self.duration:
                raise CohortError(f"event at {ev.start}s extends past recording end")
            prev_end = ev.end
        if self.od_coupling is not None and len(self.od_coupling) != len(self.event_plan):
            raise CohortError("od_coupling must parallel event_plan")
        for t, v in self.artifact_plan:
            if v not in (0, 255):
                raise CohortError("artifact values must be 0 or 255")
            if not (0 <= t < self.duration):
                raise CohortError("artifact time outside recording")
