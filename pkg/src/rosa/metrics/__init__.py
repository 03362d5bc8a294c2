from .agreement import MetricsError, bland_altman, cohens_kappa, icc, pearson_r
from .ahi import (
    DIAGNOSTIC_THRESHOLDS,
    SEVERITIES,
    AhiReport,
    DiagnosticReport,
    ThresholdStats,
    ahi_and_severity,
    diagnostic_stats,
    severity_of,
)
from .detection import ApReport, average_precision_at_iou
