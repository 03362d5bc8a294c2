"""Beat-signal cube -> three-channel spectrogram stack.

Channel 0: body-movement power (high-passed above 5 Hz).
Channel 1: breathing power (band-passed 0.1-5 Hz).
Channel 2: dominant frequency of the band-passed signal per frame.

Motion is recovered by phase demodulation of the slow-time signal at each
range bin, scaled by the bin's median magnitude so that empty range bins
stay quiet. Filters are 4th-order Butterworth applied forward-backward
(zero phase); design cutoffs are pre-compensated so the measured -3 dB
points of the two-pass response land on the nominal frequencies.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import signal as sps

from ..cohort.types import BeatSignalCube, RadarConfig

# two passes of an order-4 Butterworth reach -3 dB where one pass is -1.5 dB:
# (w/wc)^8 = sqrt(2)-1  =>  w = 0.8959 wc
_TWO_PASS_EDGE = (np.sqrt(2.0) - 1.0) ** (1.0 / 8.0)

HIGHPASS_CUTOFF = 5.0   # Hz, body movement
BAND_LO = 0.1           # Hz, respiration band
BAND_HI = 5.0


class PreprocError(ValueError):
    pass


@dataclass
class RangeTimeMatrix:
    values: np.ndarray          # complex128, (n/2 range bins, slow-time steps)
    range_resolution: float     # m per bin
    slow_rate: float            # Hz

    @property
    def n_bins(self) -> int:
        return self.values.shape[0]

    @property
    def n_steps(self) -> int:
        return self.values.shape[1]


@dataclass
class SpectrogramStack:
    channels: np.ndarray        # (3, range bins, frames)
    frame_hop: float            # s
    frame_len: float            # s
    range_window: tuple[int, int]   # [bin_lo, bin_hi) in absolute range bins
    slow_rate: float
    degraded: bool = False      # frame too short for reliable dominant-frequency
    flags: dict = field(default_factory=dict)

    @property
    def n_frames(self) -> int:
        return self.channels.shape[2]

    @property
    def n_bins(self) -> int:
        return self.channels.shape[1]

    def frame_time(self, frame: int) -> float:
        """Center time of a frame, seconds."""
        return frame * self.frame_hop + 0.5 * self.frame_len


def range_transform(beat: BeatSignalCube) -> RangeTimeMatrix:
    """Hann-windowed FFT along fast time; one-sided n/2 range bins."""
    values = np.asarray(beat.values)
    if not np.all(np.isfinite(values.view(np.float32 if values.dtype == np.complex64
                                          else np.float64))):
        raise PreprocError("non-finite beat samples")
    cfg = beat.config
    window = np.hanning(cfg.n)
    spectrum = np.fft.fft(values.astype(np.complex128) * window[:, None], axis=0)
    return RangeTimeMatrix(values=spectrum[:cfg.n // 2],
                           range_resolution=cfg.range_resolution,
                           slow_rate=cfg.F)


def _sos_highpass(cutoff: float, fs: float):
    return sps.butter(4, cutoff * _TWO_PASS_EDGE, btype="highpass", fs=fs, output="sos")


def _sos_lowpass(cutoff: float, fs: float):
    return sps.butter(4, cutoff / _TWO_PASS_EDGE, btype="lowpass", fs=fs, output="sos")


def highpass(x: np.ndarray, cutoff: float, fs: float, axis: int = -1) -> np.ndarray:
    return sps.sosfiltfilt(_sos_highpass(cutoff, fs), x, axis=axis)


def bandpass(x: np.ndarray, lo: float, hi: float, fs: float, axis: int = -1) -> np.ndarray:
    y = sps.sosfiltfilt(_sos_highpass(lo, fs), x, axis=axis)
    return sps.sosfiltfilt(_sos_lowpass(hi, fs), y, axis=axis)


def _framed_mean_power(x: np.ndarray, frame: int, hop: int) -> np.ndarray:
    """Mean of x^2 over sliding frames; x: (bins, T) -> (bins, n_frames)."""
    power = np.concatenate([np.zeros((x.shape[0], 1)), np.cumsum(x * x, axis=1)], axis=1)
    n_frames = (x.shape[1] - frame) // hop + 1
    starts = hop * np.arange(n_frames)
    return (power[:, starts + frame] - power[:, starts]) / frame


def gate_bins(rtm: RangeTimeMatrix, range_gate: tuple[float, float]) -> tuple[int, int]:
    lo = max(int(np.ceil(range_gate[0] / rtm.range_resolution)), 0)
    hi = min(int(np.floor(range_gate[1] / rtm.range_resolution)) + 1, rtm.n_bins)
    if hi <= lo:
        raise PreprocError(f"empty range gate {range_gate}")
    return lo, hi


def compute_spectrogram_stack(rtm: RangeTimeMatrix, frame_len: float = 30.0,
                              frame_hop: float = 1.0,
                              range_gate: tuple[float, float] = (0.3, 1.5),
                              doppler_mode: str = "argmax",
                              doppler_floor: float = 0.05) -> SpectrogramStack:
    """Build the 3-channel stack over the gated range bins."""
    fs = rtm.slow_rate
    if fs <= 10.0:
        raise PreprocError(f"slow rate {fs} Hz too low for the 5 Hz band edge")
    frame = int(round(frame_len * fs))
    hop = int(round(frame_hop * fs))
    if frame > rtm.n_steps:
        raise PreprocError("recording shorter than one frame")
    degraded = frame_len < 2.0 / BAND_LO

    lo, hi = gate_bins(rtm, range_gate)
    gated = rtm.values[lo:hi]
    magnitude = np.median(np.abs(gated), axis=1)
    phase = np.unwrap(np.angle(gated), axis=1)
    motion = magnitude[:, None] * phase

    hp = highpass(motion, HIGHPASS_CUTOFF, fs, axis=1)
    bp = bandpass(motion, BAND_LO, BAND_HI, fs, axis=1)
    x_m = _framed_mean_power(hp, frame, hop)
    x_b = _framed_mean_power(bp, frame, hop)

    n_frames = x_m.shape[1]
    x_d = np.zeros_like(x_m)
    window = np.hanning(frame)
    freqs = np.fft.rfftfreq(frame, d=1.0 / fs)
    band = (freqs >= BAND_LO) & (freqs <= BAND_HI)
    chunk = 4096
    for b in range(bp.shape[0]):
        peaks = np.empty(n_frames)
        peak_freqs = np.empty(n_frames)
        for c0 in range(0, n_frames, chunk):
            c1 = min(c0 + chunk, n_frames)
            starts = hop * np.arange(c0, c1)
            idx = starts[:, None] + np.arange(frame)[None, :]
            frames = bp[b, idx] * window
            mags = np.abs(np.fft.rfft(frames, axis=1))[:, band]
            k = np.argmax(mags, axis=1)
            peaks[c0:c1] = mags[np.arange(len(k)), k]
            if doppler_mode == "argmax":
                peak_freqs[c0:c1] = freqs[band][k]
            elif doppler_mode == "moment":
                denom = mags.sum(axis=1)
                denom[denom == 0] = 1.0
                peak_freqs[c0:c1] = (mags @ freqs[band]) / denom
            else:
                raise PreprocError(f"unknown doppler mode {doppler_mode!r}")
        floor = doppler_floor * np.median(peaks)
        x_d[b] = np.where(peaks >= floor, peak_freqs, 0.0)

    return SpectrogramStack(channels=np.stack([x_m, x_b, x_d]), frame_hop=frame_hop,
                            frame_len=frame_len, range_window=(lo, hi), slow_rate=fs,
                            degraded=degraded)


def preprocess_record(beat: BeatSignalCube, frame_len: float = 30.0,
                      frame_hop: float = 1.0,
                      range_gate: tuple[float, float] = (0.3, 1.5)) -> SpectrogramStack:
    return compute_spectrogram_stack(range_transform(beat), frame_len=frame_len,
                                     frame_hop=frame_hop, range_gate=range_gate)


def pool_to_epochs(stack: SpectrogramStack, epoch_len: float = 30.0) -> np.ndarray:
    """Mean-pool frames into fixed staging epochs -> (3, bins, n_epochs)."""
    frames_per_epoch = max(int(round(epoch_len / stack.frame_hop)), 1)
    duration = (stack.n_frames - 1) * stack.frame_hop + stack.frame_len
    n_epochs = int(duration // epoch_len)
    if n_epochs == 0:
        raise PreprocError("stack shorter than one staging epoch")
    needed = n_epochs * frames_per_epoch
    chans = stack.channels
    if chans.shape[2] < needed:
        # the trailing epoch has fewer frames than hop*epoch: repeat the edge
        pad = needed - chans.shape[2]
        chans = np.concatenate([chans, np.repeat(chans[:, :, -1:], pad, axis=2)], axis=2)
    trimmed = chans[:, :, :needed]
    return trimmed.reshape(3, stack.n_bins, n_epochs, frames_per_epoch).mean(axis=3)
