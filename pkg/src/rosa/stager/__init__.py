from .losses import (
    DEFAULT_T_MIN,
    change_loss,
    crf_log_partition,
    crf_loss,
    crf_score,
    duration_loss,
    focal_loss,
    total_loss,
    viterbi_decode,
)
from .model import StagerModel, epoch_slices, forward_logits
from .train import (
    StagerTrainResult,
    decode_hypnogram,
    predict_hypnogram_and_tst,
    stage_weight_vector,
    two_stage_train,
)
