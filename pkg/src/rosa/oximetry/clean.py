"""Oxygen-saturation trace cleaning: dropout masking and suppression of
sub-10-second fluctuations."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..cohort.types import SpO2Trace

FLUCTUATION_MAX_S = 10


@dataclass
class CleanTrace:
    """Cleaned 1 Hz trace; sample i sits at t = i seconds."""
    samples: np.ndarray          # float, artifact positions hold the raw value
    valid: np.ndarray            # bool mask; False where raw was 0 or 255
    all_invalid: bool = False

    def __len__(self):
        return len(self.samples)


def clean_trace(raw: SpO2Trace | np.ndarray) -> CleanTrace:
    """Mask 0/255 dropout samples and flatten short excursions.

    An excursion that leaves a level and returns to it in under 10 s is
    replaced by that level. Excursions interrupted by masked samples are
    left alone.
    """
    samples = raw.samples if isinstance(raw, SpO2Trace) else np.asarray(raw)
    values = samples.astype(float).copy()
    valid = (samples != 0) & (samples != 255)
    if not valid.any():
        return CleanTrace(samples=values, valid=valid, all_invalid=True)

    n = len(values)
    i = 1
    while i < n:
        if not (valid[i] and valid[i - 1]) or values[i] == values[i - 1]:
            i += 1
            continue
        level = values[i - 1]
        # find a return to the departure level within the 10 s horizon
        end = None
        for j in range(i + 1, min(i + FLUCTUATION_MAX_S, n)):
            if not valid[j]:
                break
            if values[j] == level:
                end = j
                break
        if end is not None:
            values[i:end] = level
        i = (end if end is not None else i) + 1
    return CleanTrace(samples=values, valid=valid)
