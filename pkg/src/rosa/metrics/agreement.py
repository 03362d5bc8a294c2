"""Agreement statistics between two raters: intraclass correlation,
Cohen's kappa and Bland-Altman limits."""
from __future__ import annotations

import numpy as np


class MetricsError(ValueError):
    pass


def icc(x, y) -> float:
    """ICC(2,1): two-way random effects, absolute agreement, single
    measurement, over paired ratings of the same subjects."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise MetricsError("paired 1-D ratings required")
    n = len(x)
    if n < 2:
        raise MetricsError("at least two subjects required")
    data = np.stack([x, y], axis=1)
    k = 2
    grand = data.mean()
    if np.allclose(data, grand):
        raise MetricsError("zero total variance")
    row_means = data.mean(axis=1)
    col_means = data.mean(axis=0)
    ss_rows = k * ((row_means - grand) ** 2).sum()
    ss_cols = n * ((col_means - grand) ** 2).sum()
    ss_total = ((data - grand) ** 2).sum()
    ss_err = ss_total - ss_rows - ss_cols
    msr = ss_rows / (n - 1)
    msc = ss_cols / (k - 1)
    mse = ss_err / ((n - 1) * (k - 1))
    return float((msr - mse) / (msr + (k - 1) * mse + k * (msc - mse) / n))


def pearson_r(x, y) -> float:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) < 2:
        raise MetricsError("at least two pairs required")
    if x.std() == 0 or y.std() == 0:
        raise MetricsError("zero variance in one rating")
    return float(np.corrcoef(x, y)[0, 1])


def cohens_kappa(pred, true) -> float | None:
    """(p_o - p_e) / (1 - p_e); None when chance agreement is exactly 1."""
    pred = np.asarray(pred)
    true = np.asarray(true)
    if pred.shape != true.shape:
        raise MetricsError("label sequences must have equal length")
    n = len(pred)
    if n == 0:
        raise MetricsError("empty label sequences")
    labels = sorted(set(pred.tolist()) | set(true.tolist()))
    p_o = float(np.mean(pred == true))
    p_e = sum(float(np.mean(pred == c)) * float(np.mean(true == c)) for c in labels)
    if p_e >= 1.0:
        return None
    return (p_o - p_e) / (1.0 - p_e)


def bland_altman(x, y) -> tuple[float, float, float]:
    """Mean difference and mean +/- 1.96 sample-sd limits of agreement."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or len(x) < 2:
        raise MetricsError("at least two pairs required")
    d = x - y
    mean = float(d.mean())
    sd = float(d.std(ddof=1))
    return mean, mean - 1.96 * sd, mean + 1.96 * sd
