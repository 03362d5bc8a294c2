from .config import (
    REPORT_SCHEMA_VERSION,
    SEVERITY_CYCLE,
    ConfigError,
    PipelineConfig,
    content_key,
)
from .report import (
    ReportError,
    bland_altman_svg,
    render_text_report,
    scatter_svg,
    severity_table_svg,
    timeline_svg,
    write_report,
)
from .run import (
    StageError,
    TrainedFold,
    generate_cohort,
    infer_subject,
    preprocess_cohort,
    run_pipeline,
    sweep_omega,
    train_fold,
)
