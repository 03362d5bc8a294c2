"""Apnea-hypopnea index arithmetic, severity banding and the threshold
diagnostics reported per screening cutoff."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..cohort.types import APNEA_KINDS, Hypnogram, SleepStage
from ..detector.boxes import DetectedSegment
from .agreement import MetricsError, cohens_kappa

SEVERITIES = ["Healthy", "Mild", "Moderate", "Severe"]
DIAGNOSTIC_THRESHOLDS = (5.0, 15.0, 30.0)


def severity_of(ahi: float) -> str:
    """Half-open bands: [0,5) [5,15) [15,30) [30,inf)."""
    if ahi < 5:
        return "Healthy"
    if ahi < 15:
        return "Mild"
    if ahi < 30:
        return "Moderate"
    return "Severe"


@dataclass
class AhiReport:
    n_apnea: int
    n_hypopnea: int
    tst_hours: float
    ahi: float
    severity: str


def ahi_and_severity(segments: list[DetectedSegment],
                     hypnogram: Hypnogram) -> AhiReport:
    """Count events whose midpoint falls inside a non-Wake epoch."""
    tst = hypnogram.tst_hours()
    if tst <= 0:
        raise MetricsError("no sleep detected")
    n_ap = n_hp = 0
    for seg in segments:
        mid = 0.5 * (seg.t_start + seg.t_end)
        if hypnogram.stage_at(mid) is SleepStage.W:
            continue
        if seg.kind in APNEA_KINDS:
            n_ap += 1
        else:
            n_hp += 1
    ahi = (n_ap + n_hp) / tst
    return AhiReport(n_apnea=n_ap, n_hypopnea=n_hp, tst_hours=tst,
                     ahi=ahi, severity=severity_of(ahi))


@dataclass
class ThresholdStats:
    threshold: float
    sensitivity: float | None
    specificity: float | None
    accuracy: float
    kappa: float | None


@dataclass
class DiagnosticReport:
    per_threshold: list[ThresholdStats]
    severity_confusion: np.ndarray  # rows: true band, cols: estimated band


def diagnostic_stats(est_ahi, true_ahi,
                     thresholds=DIAGNOSTIC_THRESHOLDS) -> DiagnosticReport:
    est = np.asarray(est_ahi, dtype=float)
    true = np.asarray(true_ahi, dtype=float)
    if est.shape != true.shape or len(est) == 0:
        raise MetricsError("paired non-empty AHI lists required")
    rows = []
    for t in thresholds:
        ep = est >= t
        tp_ = true >= t
        tp = int(np.sum(ep & tp_))
        tn = int(np.sum(~ep & ~tp_))
        fp = int(np.sum(ep & ~tp_))
        fn = int(np.sum(~ep & tp_))
        se = tp / (tp + fn) if tp + fn else None
        sp = tn / (tn + fp) if tn + fp else None
        acc = (tp + tn) / len(est)
        rows.append(ThresholdStats(threshold=t, sensitivity=se, specificity=sp,
                                   accuracy=acc,
                                   kappa=cohens_kappa(ep.astype(int), tp_.astype(int))))
    conf = np.zeros((4, 4), dtype=int)
    for e, t in zip(est, true):
        conf[SEVERITIES.index(severity_of(t)), SEVERITIES.index(severity_of(e))] += 1
    return DiagnosticReport(per_threshold=rows, severity_confusion=conf)
