from .anchors import DEFAULT_LEVEL_STRIDES, DEFAULT_SCALES, anchors_as_arrays, generate_anchors
from .boxes import (
    CLASS_NAMES,
    CLASS_TO_INDEX,
    INDEX_TO_KIND,
    KIND_TO_INDEX,
    Anchor,
    BoxError,
    DetectedSegment,
    decode_center_width,
    decode_segment,
    encode_offsets,
    iou_1d,
    iou_matrix,
    nms_1d,
)
from .infer import DetectionResult, chunk_starts, detect_chunk, detect_events
from .loss import detection_loss, flatten_spn, match_anchors, smooth_l1
from .model import DetectorModel
from .roialign import interpolation_matrix, roi_align_1d
from .train import (
    DetectorTrainResult,
    TrainingChunk,
    build_training_chunks,
    class_weight_vector,
    train_detector,
)
