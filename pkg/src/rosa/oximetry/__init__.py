from .clean import CleanTrace, clean_trace
from .features import (
    NO_OXIMETRY,
    OD_THRESHOLD,
    Desaturation,
    OximetryError,
    SpO2Features,
    desaturation_segments,
    extract_features,
    odi3,
)
from .fusion import (
    FusionDataset,
    FusionError,
    FusionNet,
    build_fusion_dataset,
    fusion_loss,
    soft_fuse,
    train_fusion,
)
