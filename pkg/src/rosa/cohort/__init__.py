from .types import (APNEA_KINDS, AnnotatedEvent, BeatSignalCube, CohortError, EventKind,
                    GRANULARITIES, Hypnogram, MIN_EVENT_DURATION, OdCoupling,
                    PlannedEvent, RadarConfig, SleepStage, SpO2Trace, SubjectProfile,
                    SubjectRecord, STAGES)
from .generate import (default_hypnogram, generate_subject, render_beat_signal,
                       split_folds, synthesize_spo2)
from .plans import SEVERITY_AHI, random_event_plan, random_profile, random_stage_plan
from .io import (ContainerChecksumError, ContainerError, ContainerTruncatedError,
                 ContainerVersionError, load_cohort, load_record, save_cohort,
                 save_record)
