import numpy as np
import pytest

from rosa.cohort import (EventKind, PlannedEvent, RadarConfig, SubjectProfile,
                         generate_subject, render_beat_signal)
from rosa.preproc import (PreprocError, StackNormalizer, bandpass,
                          compute_spectrogram_stack, dump_stack, highpass, load_stack,
                          pool_to_epochs, range_transform)
from rosa.cohort.types import BeatSignalCube

CFG = RadarConfig(F=20.0, n=64)


def _dense_dft_peak_bin(chirp: np.ndarray, cfg: RadarConfig) -> float:
    """Oracle: zero-padded dense DFT peak frequency, expressed in FFT bins."""
    pad = 64
    spec = np.abs(np.fft.fft(chirp, n=pad * len(chirp)))
    half = len(spec) // 2
    return np.argmax(spec[:half]) / pad


class TestRangeTransform:
    def test_peak_bin_for_08m_target(self):
        cube = render_beat_signal(CFG, 0.8, np.zeros(50), snr_db=None)
        rtm = range_transform(cube)
        profile = np.abs(rtm.values[:, 0])
        assert np.argmax(profile) == 16  # 0.8 m / (c / 2B) = 0.8 / 0.05
        assert rtm.range_resolution == pytest.approx(0.05, rel=1e-3)
        oracle = _dense_dft_peak_bin(cube.values[:, 0].astype(np.complex128), CFG)
        assert abs(np.argmax(profile) - oracle) <= 1.0

    def test_all_zero_input(self):
        cube = BeatSignalCube(np.zeros((CFG.n, 10), dtype=np.complex64), CFG)
        rtm = range_transform(cube)
        assert np.all(rtm.values == 0)

    def test_two_targets_resolved(self):
        a = render_beat_signal(CFG, 0.6, np.zeros(20), snr_db=None)
        b = render_beat_signal(CFG, 1.1, np.zeros(20), snr_db=None)
        both = BeatSignalCube((a.values.astype(np.complex128)
                               + b.values.astype(np.complex128)), CFG)
        rtm = range_transform(both)
        profile = np.abs(rtm.values[:, 0])
        peaks = [i for i in range(1, len(profile) - 1)
                 if profile[i] > profile[i - 1] and profile[i] >= profile[i + 1]
                 and profile[i] > 0.2 * profile.max()]
        assert 12 in peaks and 22 in peaks

    def test_linearity(self):
        rng = np.random.default_rng(0)
        a = BeatSignalCube(rng.normal(size=(CFG.n, 5)) + 1j * rng.normal(size=(CFG.n, 5)), CFG)
        b = BeatSignalCube(rng.normal(size=(CFG.n, 5)) + 1j * rng.normal(size=(CFG.n, 5)), CFG)
        ab = BeatSignalCube(a.values + b.values, CFG)
        lhs = range_transform(ab).values
        rhs = range_transform(a).values + range_transform(b).values
        np.testing.assert_allclose(lhs, rhs, rtol=1e-9, atol=1e-12)

    def test_nonfinite_rejected(self):
        vals = np.zeros((CFG.n, 4), dtype=np.complex64)
        vals[3, 2] = np.nan
        with pytest.raises(PreprocError, match="non-finite"):
            range_transform(BeatSignalCube(vals, CFG))


class TestFilters:
    @pytest.mark.parametrize("cutoff,fs", [(5.0, 20.0), (5.0, 250.0)])
    def test_highpass_minus3db_point(self, cutoff, fs):
        t = np.arange(int(200 * fs)) / fs
        gains = {}
        for f in np.linspace(0.5 * cutoff, 1.5 * cutoff, 41):
            x = np.sin(2 * np.pi * f * t)
            y = highpass(x, cutoff, fs)
            gains[f] = np.sqrt(np.mean(y[len(y) // 4:-len(y) // 4] ** 2) / 0.5)
        freqs = np.array(list(gains))
        g = np.array(list(gains.values()))
        f3 = freqs[np.argmin(np.abs(g - 10 ** (-3 / 20)))]
        assert abs(f3 - cutoff) / cutoff < 0.10

    def test_bandpass_edges(self):
        fs = 20.0
        t = np.arange(int(1200 * fs)) / fs
        for edge in (0.1, 5.0):
            x = np.sin(2 * np.pi * edge * t)
            y = bandpass(x, 0.1, 5.0, fs)
            core = slice(len(y) // 4, -len(y) // 4)
            gain = np.sqrt(np.mean(y[core] ** 2) / 0.5)
            assert abs(gain - 10 ** (-3 / 20)) < 0.12

    def test_band_rejects_out_of_band(self):
        fs = 20.0
        t = np.arange(int(600 * fs)) / fs
        x = np.sin(2 * np.pi * 8.0 * t)  # above the 5 Hz edge
        y = bandpass(x, 0.1, 5.0, fs)
        assert np.sqrt(np.mean(y ** 2)) < 0.15


class TestSpectrogramStack:
    def _stack_for(self, profile, frame_hop=1.0):
        rec = generate_subject(profile, CFG)
        return compute_spectrogram_stack(range_transform(rec.beat), frame_hop=frame_hop), rec

    def test_pure_breathing(self):
        p = SubjectProfile(seed=1, duration=400.0, bed_range=0.8,
                           breathing_rate=0.3, noise_free=True)
        stack, _ = self._stack_for(p)
        lo, hi = stack.range_window
        target = 16 - lo
        x_m, x_b, x_d = stack.channels
        # breathing power concentrated at the target's range bin
        assert np.argmax(x_b.mean(axis=1)) == target
        assert x_m[target].mean() < 0.01 * x_b[target].mean()
        freq_res = 1.0 / stack.frame_len
        assert np.all(np.abs(x_d[target] - 0.3) <= freq_res + 1e-9)

    def test_channels_share_shape(self):
        p = SubjectProfile(seed=2, duration=200.0)
        stack, _ = self._stack_for(p)
        assert stack.channels.shape[0] == 3
        assert stack.channels[0].shape == stack.channels[1].shape == stack.channels[2].shape

    def test_power_channels_nonnegative(self):
        p = SubjectProfile(seed=3, duration=200.0)
        stack, _ = self._stack_for(p)
        assert np.all(stack.channels[:2] >= 0)
        assert np.all(np.abs(stack.channels[2]) <= stack.slow_rate / 2)

    def test_vibration_burst_raises_movement_channel(self):
        fs = 250.0
        cfg = RadarConfig(F=fs, n=64)
        t = np.arange(int(120 * fs)) / fs
        d = 0.004 * np.sin(2 * np.pi * 0.3 * t)
        burst = np.zeros_like(t)
        sel = (t >= 60) & (t < 65)
        burst[sel] = 0.004 * np.sin(2 * np.pi * 20.0 * t[sel])
        cube = render_beat_signal(cfg, 0.8, d, movement=burst, snr_db=None)
        stack = compute_spectrogram_stack(range_transform(cube))
        lo, _ = stack.range_window
        x_m = stack.channels[0][16 - lo]
        in_burst = x_m[28:38].mean()   # frames covering 60-65 s
        outside = x_m[:20].mean()
        assert in_burst > 10 * max(outside, 1e-12)

    def test_ca_event_drops_breathing_channels(self):
        p = SubjectProfile(seed=4, duration=400.0, noise_free=True,
                           breathing_rate=0.3,
                           event_plan=[PlannedEvent(EventKind.CA, 180.0, 40.0)])
        stack, _ = self._stack_for(p)
        lo, _ = stack.range_window
        x_b = stack.channels[1][16 - lo]
        x_d = np.abs(stack.channels[2][16 - lo])
        event = slice(180, 190)        # frames fully inside the event
        before = slice(120, 150)
        assert x_b[event].mean() < 0.25 * x_b[before].mean()
        assert x_d[event].mean() < x_d[before].mean()

    def test_short_frame_sets_degraded_flag(self):
        p = SubjectProfile(seed=5, duration=200.0)
        rec = generate_subject(p, CFG)
        stack = compute_spectrogram_stack(range_transform(rec.beat), frame_len=10.0)
        assert stack.degraded

    def test_pool_to_epochs_matches_hypnogram(self):
        p = SubjectProfile(seed=6, duration=300.0)
        stack, rec = self._stack_for(p)
        pooled = pool_to_epochs(stack)
        assert pooled.shape[2] == len(rec.truth_hypnogram.stages)


class TestNormalizer:
    def _stacks(self):
        out = []
        for seed in (10, 11):
            rec = generate_subject(SubjectProfile(seed=seed, duration=200.0), CFG)
            out.append(compute_spectrogram_stack(range_transform(rec.beat)))
        return out

    def test_training_statistics(self):
        stacks = self._stacks()
        norm = StackNormalizer().fit(stacks)
        normed = norm.transform(stacks)
        flat = np.concatenate([s.channels[:2].reshape(2, -1) for s in normed], axis=1)
        np.testing.assert_allclose(flat.mean(axis=1), 0.0, atol=1e-6)
        np.testing.assert_allclose(flat.std(axis=1), 1.0, atol=1e-6)

    def test_constant_channel_fallback(self):
        stacks = self._stacks()
        for s in stacks:
            s.channels[0][:] = 3.0
        norm = StackNormalizer().fit(stacks)
        out = norm.transform(stacks[0])
        assert np.allclose(out.channels[0], 0.0)
        assert out.flags.get("zero_variance_channel")

    def test_identity_normalizer_passthrough(self):
        stacks = self._stacks()
        norm = StackNormalizer().fit(stacks)
        once = norm.transform(stacks[0])
        again = StackNormalizer(identity=True).fit([]).transform(once)
        np.testing.assert_array_equal(once.channels, again.channels)

    def test_save_load(self, tmp_path):
        stacks = self._stacks()
        norm = StackNormalizer().fit(stacks)
        norm.save(tmp_path / "norm.json")
        back = StackNormalizer.load(tmp_path / "norm.json")
        a = norm.transform(stacks[0]).channels
        b = back.transform(stacks[0]).channels
        np.testing.assert_array_equal(a, b)


def test_stack_dump_roundtrip(tmp_path):
    rec = generate_subject(SubjectProfile(seed=20, duration=200.0), CFG)
    stack = compute_spectrogram_stack(range_transform(rec.beat))
    dump_stack(stack, tmp_path / "s")
    back = load_stack(tmp_path / "s")
    np.testing.assert_array_equal(back.channels, stack.channels)
    assert back.range_window == stack.range_window
