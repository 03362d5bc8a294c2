"""Random but reproducible subject-profile builders for cohort studies."""
from __future__ import annotations

import numpy as np

from .types import (EventKind, OdCoupling, PlannedEvent, SleepStage, SubjectProfile)

_KIND_WEIGHTS = [(EventKind.OA, 0.50), (EventKind.HP, 0.30),
                 (EventKind.CA, 0.12), (EventKind.MA, 0.08)]

SEVERITY_AHI = {"healthy": (0.5, 4.0), "mild": (5.5, 13.0),
                "moderate": (16.0, 28.0), "severe": (32.0, 55.0)}


def random_stage_plan(rng: np.random.Generator, n_epochs: int) -> list[SleepStage]:
    """Sleep-cycle-shaped hypnogram: initial wake, N1-N2-N3-N2-R cycles,
    occasional awakenings."""
    plan: list[SleepStage] = [SleepStage.W] * int(rng.integers(3, 9))
    cycle = [(SleepStage.N1, 1, 3), (SleepStage.N2, 6, 14), (SleepStage.N3, 5, 12),
             (SleepStage.N2, 3, 8), (SleepStage.R, 3, 10)]
    while len(plan) < n_epochs:
        for stage, lo, hi in cycle:
            plan.extend([stage] * int(rng.integers(lo, hi + 1)))
            if rng.random() < 0.15:
                plan.extend([SleepStage.W] * int(rng.integers(1, 3)))
            if len(plan) >= n_epochs:
                break
    return plan[:n_epochs]


def random_event_plan(rng: np.random.Generator, stage_plan: list[SleepStage],
                      epoch_len: float, target_ahi: float,
                      uncoupled_extra_frac: float = 0.05
                      ) -> tuple[list[PlannedEvent], list[OdCoupling]]:
    """Place non-overlapping events in sleep time at the requested event rate."""
    tst_h = sum(1 for s in stage_plan if s is not SleepStage.W) * epoch_len / 3600.0
    n_events = int(round(target_ahi * tst_h))
    sleep_spans = []
    i = 0
    while i < len(stage_plan):
        if stage_plan[i] is not SleepStage.W:
            j = i
            while j < len(stage_plan) and stage_plan[j] is not SleepStage.W:
                j += 1
            sleep_spans.append((i * epoch_len, j * epoch_len))
            i = j
        else:
            i += 1
    events: list[PlannedEvent] = []
    couplings: list[OdCoupling] = []
    cursor_by_span = {k: lo + rng.uniform(5, 30) for k, (lo, _) in enumerate(sleep_spans)}
    attempts = 0
    while len(events) < n_events and attempts < n_events * 20:
        attempts += 1
        k = int(rng.integers(0, len(sleep_spans)))
        lo, hi = sleep_spans[k]
        dur = float(rng.uniform(10.0, 45.0)) if rng.random() < 0.85 else float(rng.uniform(45.0, 110.0))
        start = cursor_by_span[k]
        # minimum gap covers the desaturation/resaturation window
        gap = rng.uniform(60.0, 120.0)
        if start + dur + 5 > hi:
            cursor_by_span[k] = hi  # span exhausted
            if all(cursor_by_span[q] + 20 >= sleep_spans[q][1] for q in cursor_by_span):
                break
            continue
        kinds, weights = zip(*_KIND_WEIGHTS)
        kind = rng.choice(np.array([k.value for k in kinds]), p=np.array(weights))
        kind = EventKind(str(kind))
        events.append(PlannedEvent(kind, start, dur))
        coupled = kind is not EventKind.CA and rng.random() > uncoupled_extra_frac
        couplings.append(OdCoupling(depth=int(rng.integers(3, 8)),
                                    delay=float(rng.uniform(10.0, 30.0)),
                                    coupled=coupled))
        cursor_by_span[k] = start + dur + gap
    order = np.argsort([e.start for e in events])
    return [events[i] for i in order], [couplings[i] for i in order]


def random_profile(seed: int, duration: float = 28800.0,
                   severity: str = "mild") -> SubjectProfile:
    rng = np.random.default_rng(seed)
    n_epochs = int(duration // 30.0)
    stage_plan = random_stage_plan(rng, n_epochs)
    lo, hi = SEVERITY_AHI[severity]
    target_ahi = float(rng.uniform(lo, hi))
    events, couplings = random_event_plan(rng, stage_plan, 30.0, target_ahi)
    return SubjectProfile(
        seed=seed,
        duration=duration,
        bed_range=float(rng.uniform(0.5, 1.2)),
        breathing_rate=float(rng.uniform(0.18, 0.33)),
        breathing_amplitude=float(rng.uniform(0.003, 0.006)),
        event_plan=events,
        stage_plan=stage_plan,
        od_coupling=couplings,
        spo2_baseline=int(rng.integers(95, 99)),
    )
