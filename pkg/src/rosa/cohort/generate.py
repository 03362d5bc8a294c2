"""Synthetic overnight recording generator.

Chest displacement is a baseline sinusoid whose amplitude, rate jitter and
movement content depend on the planned sleep stage; planned events modulate
the amplitude envelope (CA suppresses breathing almost entirely, OA/HP
attenuate it, MA is CA-like then OA-like). The beat signal then follows the
FMCW point-target model for a chest at the configured bed range.
"""
from __future__ import annotations

import numpy as np

from .types import (AnnotatedEvent, BeatSignalCube, CohortError, EventKind, Hypnogram,
                    OdCoupling, PlannedEvent, RadarConfig, SleepStage, SpO2Trace,
                    SubjectProfile, SubjectRecord)

# per-stage displacement shaping: (amplitude scale, rate jitter sd in Hz,
# movement bursts per 30 s epoch)
_STAGE_SHAPE = {
    SleepStage.W: (0.9, 0.060, 2.5),
    SleepStage.R: (0.95, 0.045, 0.05),
    SleepStage.N1: (1.0, 0.020, 0.1),
    SleepStage.N2: (1.0, 0.010, 0.02),
    SleepStage.N3: (1.25, 0.004, 0.0),
}


def render_beat_signal(config: RadarConfig, r0: float, d: np.ndarray,
                       movement: np.ndarray | None = None, snr_db: float | None = 20.0,
                       amplitude: float = 1.0,
                       rng: np.random.Generator | None = None) -> BeatSignalCube:
    """Simulate the beat-signal matrix for a single point target.

    d and movement are displacement series (m) sampled at the chirp rate.
    snr_db=None disables additive noise.
    """
    if r0 >= config.max_unambiguous_range:
        raise CohortError(f"target range {r0} m beyond unambiguous range "
                          f"{config.max_unambiguous_range:.2f} m")
    d = np.asarray(d, dtype=np.float64)
    total = d if movement is None else d + np.asarray(movement, dtype=np.float64)
    tau = np.arange(config.n) / config.fast_rate
    fast_phase = 2.0 * np.pi * 2.0 * config.K * r0 / config.c * tau      # (n,)
    slow_phase = 2.0 * np.pi * 2.0 * (r0 + total) / config.lambda0       # (T,)
    values = amplitude * np.exp(1j * (fast_phase[:, None] + slow_phase[None, :]))
    if snr_db is not None:
        rng = rng or np.random.default_rng(0)
        sigma = amplitude * 10.0 ** (-snr_db / 20.0) / np.sqrt(2.0)
        values = values + sigma * (rng.standard_normal(values.shape)
                                   + 1j * rng.standard_normal(values.shape))
    return BeatSignalCube(values=values.astype(np.complex64), config=config)


def _event_envelope(profile: SubjectProfile, t: np.ndarray,
                    rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Amplitude scale in [0,1] and extra phase noise applied during events."""
    env = np.ones_like(t)
    phase_noise = np.zeros_like(t)
    for ev in profile.event_plan:
        mask = (t >= ev.start) & (t < ev.end)
        if not mask.any():
            continue
        if ev.kind is EventKind.CA:
            env[mask] = 0.02
        elif ev.kind is EventKind.OA:
            env[mask] = rng.uniform(0.2, 0.4)
            phase_noise[mask] = rng.normal(0.0, 0.6, mask.sum()).cumsum() * 0.02
        elif ev.kind is EventKind.MA:
            mid = 0.5 * (ev.start + ev.end)
            first = mask & (t < mid)
            second = mask & (t >= mid)
            env[first] = 0.02
            env[second] = rng.uniform(0.2, 0.4)
            phase_noise[second] = rng.normal(0.0, 0.6, second.sum()).cumsum() * 0.02
        else:  # HP
            env[mask] = rng.uniform(0.3, 0.7)
    return env, phase_noise


def _stage_series(profile: SubjectProfile, hypnogram: Hypnogram, t: np.ndarray,
                  rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-sample amplitude scale, breathing rate and movement displacement."""
    amp = np.empty_like(t)
    rate = np.empty_like(t)
    movement = np.zeros_like(t)
    fs = profile_slow_rate(profile)
    for i, stage in enumerate(hypnogram.stages):
        a_scale, jitter, bursts = _STAGE_SHAPE[stage]
        lo = int(round(i * hypnogram.epoch_len * fs))
        hi = min(int(round((i + 1) * hypnogram.epoch_len * fs)), len(t))
        if hi <= lo:
            continue
        amp[lo:hi] = a_scale
        # smooth rate wander within the epoch
        wander = rng.normal(0.0, jitter, 4)
        xp = np.linspace(0, hi - lo - 1, 4)
        rate[lo:hi] = profile.breathing_rate + np.interp(np.arange(hi - lo), xp, wander)
        n_bursts = rng.poisson(bursts)
        for _ in range(n_bursts):
            dur = rng.uniform(0.5, 2.0)
            start = rng.uniform(0, hypnogram.epoch_len - dur)
            b_lo = lo + int(start * fs)
            b_hi = min(b_lo + max(int(dur * fs), 2), hi)
            f_mov = rng.uniform(5.5, min(0.45 * fs, 20.0))
            tt = np.arange(b_hi - b_lo) / fs
            window = np.hanning(b_hi - b_lo)
            movement[b_lo:b_hi] += (rng.uniform(0.003, 0.008) * window
                                    * np.sin(2 * np.pi * f_mov * tt + rng.uniform(0, 2 * np.pi)))
    np.clip(rate, 0.1, 5.0, out=rate)
    return amp, rate, movement


def profile_slow_rate(profile: SubjectProfile, config: RadarConfig | None = None) -> float:
    return (config or RadarConfig()).F


def default_hypnogram(profile: SubjectProfile) -> Hypnogram:
    n_epochs = int(profile.duration // profile.epoch_len)
    if profile.stage_plan is not None:
        if len(profile.stage_plan) != n_epochs:
            raise CohortError(f"stage plan length {len(profile.stage_plan)} != "
                              f"{n_epochs} epochs")
        return Hypnogram(list(profile.stage_plan), profile.epoch_len)
    return Hypnogram([SleepStage.N2] * n_epochs, profile.epoch_len)


def generate_subject(profile: SubjectProfile, config: RadarConfig | None = None,
                     subject_id: str = "s0") -> SubjectRecord:
    """Deterministically synthesize one subject from its profile."""
    profile.validate()
    config = config or RadarConfig()
    rng = np.random.default_rng(profile.seed)
    hypnogram = default_hypnogram(profile)
    n_slow = int(round(profile.duration * config.F))
    t = np.arange(n_slow) / config.F

    amp_scale, rate, movement = _stage_series(profile, hypnogram, t, rng)
    env, phase_noise = _event_envelope(profile, t, rng)
    phase = 2 * np.pi * np.cumsum(rate) / config.F + phase_noise
    has_events = bool(profile.event_plan)
    if not has_events and profile.stage_plan is None:
        # pure sinusoid in the trivial no-event, no-staging case
        d = profile.breathing_amplitude * np.sin(2 * np.pi * profile.breathing_rate * t)
        movement = np.zeros_like(t)
    else:
        d = profile.breathing_amplitude * amp_scale * env * np.sin(phase)

    beat = render_beat_signal(config, profile.bed_range, d, movement,
                              snr_db=None if profile.noise_free else profile.snr_db,
                              rng=rng)
    truth_events = [AnnotatedEvent(ev.kind, ev.start, ev.end)
                    for ev in sorted(profile.event_plan, key=lambda e: e.start)]
    spo2 = synthesize_spo2(profile, truth_events, rng)
    return SubjectRecord(subject_id=subject_id, config=config, beat=beat, spo2=spo2,
                         truth_events=truth_events, truth_hypnogram=hypnogram)


def synthesize_spo2(profile: SubjectProfile, truth_events: list[AnnotatedEvent],
                    rng: np.random.Generator | None = None) -> SpO2Trace:
    """1 Hz integer SpO2 trace with event-coupled desaturations and artifacts."""
    rng = rng or np.random.default_rng(profile.seed + 1)
    n = int(profile.duration)
    trace = np.full(n, float(profile.spo2_baseline))
    couplings = profile.od_coupling
    if couplings is None:
        couplings = [OdCoupling(depth=int(rng.integers(3, 7)),
                                delay=float(rng.uniform(10.0, 30.0)),
                                coupled=ev.kind is not EventKind.CA)
                     for ev in truth_events]
    for ev, cpl in zip(truth_events, couplings):
        if not cpl.coupled:
            continue
        onset = int(round(ev.t_end + cpl.delay))
        fall, hold, rise = 10, 2, 15
        nadir = onset + fall
        for i in range(fall + 1):
            if onset + i < n:
                trace[onset + i] = min(trace[onset + i],
                                       profile.spo2_baseline - cpl.depth * i / fall)
        for i in range(hold):
            if nadir + i < n:
                trace[nadir + i] = min(trace[nadir + i], profile.spo2_baseline - cpl.depth)
        for i in range(1, rise + 1):
            j = nadir + hold + i - 1
            if j < n:
                trace[j] = min(trace[j],
                               profile.spo2_baseline - cpl.depth * (1 - i / rise))
    # short benign fluctuations (<10 s, 1%) to exercise the suppression rule
    for _ in range(profile.fluctuation_count):
        start = int(rng.integers(0, max(n - 10, 1)))
        width = int(rng.integers(3, 9))
        trace[start:start + width] -= 1.0
    samples = np.clip(np.rint(trace), 50, 100).astype(np.uint8)
    for ts, val in profile.artifact_plan:
        samples[int(ts)] = val
    return SpO2Trace(samples=samples)


def split_folds(records: list, k: int) -> list[list[int]]:
    """Deterministic round-robin partition into k test folds (index lists)."""
    if k < 2:
        raise CohortError("fold count must be >= 2")
    folds: list[list[int]] = [[] for _ in range(k)]
    for i in range(len(records)):
        folds[i % k].append(i)
    return folds
