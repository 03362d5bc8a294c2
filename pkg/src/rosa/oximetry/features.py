"""Desaturation/resaturation segmentation and the four-feature summary used
by the fusion scorer, plus the whole-night desaturation index."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..detector.boxes import DetectedSegment
from .clean import CleanTrace

OD_THRESHOLD = 3.0      # percent; depth at or above this counts as a true OD
SEARCH_WINDOW_S = 60.0
SHORT_WINDOW_S = 15.0


class OximetryError(ValueError):
    pass


@dataclass
class Desaturation:
    onset_t: float       # last sample at the pre-fall maximum
    onset_v: float
    nadir_first_t: float  # first sample at the minimum (fall endpoint)
    nadir_last_t: float   # last sample at the minimum (rise start)
    nadir_v: float
    peak_t: float         # first sample of the following maximum
    peak_v: float

    @property
    def depth(self) -> float:
        return self.onset_v - self.nadir_v

    @property
    def rise(self) -> float:
        return self.peak_v - self.nadir_v


@dataclass
class SpO2Features:
    p_od: float
    p_or: float
    v_od: float
    v_or: float
    valid: bool = True       # False: no usable oximetry in the window
    truncated: bool = False  # window clipped below 15 s by the trace end

    def vector(self) -> np.ndarray:
        return np.array([self.p_od, self.p_or, self.v_od, self.v_or])


def no_oximetry() -> SpO2Features:
    return SpO2Features(0.0, 0.0, 0.0, 0.0, valid=False)


NO_OXIMETRY = no_oximetry()  # template value; compare fields, do not mutate


def desaturation_segments(times: np.ndarray, values: np.ndarray) -> list[Desaturation]:
    """Split a valid-sample series into fall/rise episodes.

    Plateaus attach to their neighbors so that slopes are measured from the
    last sample at the onset level to the first sample at the nadir, and from
    the last nadir sample to the first sample of the next peak.
    """
    n = len(values)
    if n < 2:
        return []
    out: list[Desaturation] = []
    i = 0
    while i < n - 1:
        # advance over non-falling ground to the last pre-fall sample
        while i < n - 1 and values[i + 1] >= values[i]:
            i += 1
        if i >= n - 1:
            break
        onset_t, onset_v = times[i], values[i]
        # descend (plateaus inside the fall are part of it) until a rise
        j = i
        while j < n - 1 and values[j + 1] <= values[j]:
            j += 1
        # first sample at the minimum value within the fall
        nadir_v = values[j]
        k = i
        while values[k] > nadir_v:
            k += 1
        nadir_first_t = times[k]
        nadir_last_t = times[j]
        # climb to the next peak
        m = j
        while m < n - 1 and values[m + 1] >= values[m]:
            m += 1
        if values[m] > nadir_v:
            q = j
            while values[q] < values[m]:
                q += 1
            peak_t, peak_v = times[q], values[m]
        else:
            peak_t, peak_v = nadir_last_t, nadir_v  # trace ends at the nadir
        out.append(Desaturation(onset_t, onset_v, nadir_first_t, nadir_last_t,
                                nadir_v, peak_t, peak_v))
        i = j + 1 if m == j else m
    return out


def _features_from(desat: Desaturation) -> SpO2Features:
    fall_dur = desat.nadir_first_t - desat.onset_t
    rise_dur = desat.peak_t - desat.nadir_last_t
    v_od = -desat.depth / fall_dur if fall_dur > 0 else 0.0
    v_or = desat.rise / rise_dur if rise_dur > 0 else 0.0
    return SpO2Features(desat.depth, desat.rise, v_od, v_or)


def extract_features(trace: CleanTrace, segment: DetectedSegment,
                     window_s: float = SEARCH_WINDOW_S) -> SpO2Features:
    """Features of the first deep-enough desaturation in (t_end, t_end + 60]."""
    lo = int(np.floor(segment.t_end)) + 1
    hi = min(int(np.floor(segment.t_end + window_s)), len(trace) - 1)
    if lo > hi:
        return no_oximetry()
    truncated = (hi - lo + 1) < SHORT_WINDOW_S
    idx = np.arange(lo, hi + 1)
    keep = trace.valid[lo:hi + 1]
    if not keep.any():
        return no_oximetry()
    times = idx[keep].astype(float)
    values = trace.samples[lo:hi + 1][keep]
    desats = desaturation_segments(times, values)
    if not desats:
        return SpO2Features(0.0, 0.0, 0.0, 0.0, truncated=truncated)
    deep = [d for d in desats if d.depth >= OD_THRESHOLD]
    chosen = deep[0] if deep else max(desats, key=lambda d: (d.depth, -d.onset_t))
    feats = _features_from(chosen)
    feats.truncated = truncated
    return feats


def odi3(trace: CleanTrace, tst_hours: float) -> float:
    """Desaturations of depth >= 3% per hour of sleep, over the whole trace."""
    if tst_hours <= 0:
        raise OximetryError("total sleep time must be positive")
    idx = np.flatnonzero(trace.valid)
    if len(idx) < 2:
        return 0.0
    desats = desaturation_segments(idx.astype(float), trace.samples[idx])
    count = sum(1 for d in desats if d.depth >= OD_THRESHOLD)
    return count / tst_hours
