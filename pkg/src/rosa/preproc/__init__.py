from .spectrogram import (BAND_HI, BAND_LO, HIGHPASS_CUTOFF, PreprocError,
                          RangeTimeMatrix, SpectrogramStack, bandpass,
                          compute_spectrogram_stack, gate_bins, highpass,
                          pool_to_epochs, preprocess_record, range_transform)
from .normalize import StackNormalizer, dump_stack, load_stack
