import numpy as np
import pytest

from rosa.cohort import (AnnotatedEvent, CohortError, ContainerChecksumError,
                         ContainerVersionError, EventKind, OdCoupling, PlannedEvent,
                         RadarConfig, SleepStage, SubjectProfile, generate_subject,
                         load_record, random_profile, render_beat_signal, save_record,
                         split_folds, synthesize_spo2)
from rosa.cohort.io import MAGIC

CFG = RadarConfig(F=20.0, n=64)  # desk-scale radar for fast tests


def test_radar_config_invariants():
    cfg = RadarConfig()
    assert cfg.lambda0 == pytest.approx(cfg.c / 60e9)
    assert cfg.K == pytest.approx(3e9 / cfg.T_r)
    assert cfg.range_resolution == pytest.approx(0.05, rel=1e-3)
    with pytest.raises(CohortError):
        RadarConfig(n=100)  # not a power of two
    with pytest.raises(CohortError):
        RadarConfig(F=20000.0)  # F > 1/T_r


def test_no_event_profile_is_pure_sinusoid():
    p = SubjectProfile(seed=1, duration=600.0, noise_free=True)
    rec = generate_subject(p, CFG)
    assert rec.truth_events == []
    # phase at the target bin must be a clean sinusoid: check the slow-time
    # phase of a single fast-time sample directly
    phase = np.unwrap(np.angle(rec.beat.values[0].astype(np.complex128)))
    phase -= phase.mean()
    t = np.arange(rec.beat.n_chirps) / CFG.F
    expected = 4 * np.pi * p.breathing_amplitude / CFG.lambda0 * np.sin(
        2 * np.pi * p.breathing_rate * t)
    expected -= expected.mean()
    np.testing.assert_allclose(phase, expected, atol=1e-5)


def test_event_plan_passthrough():
    p = SubjectProfile(seed=2, duration=300.0,
                       event_plan=[PlannedEvent(EventKind.OA, 100.0, 30.0)])
    rec = generate_subject(p, CFG)
    assert rec.truth_events == [AnnotatedEvent(EventKind.OA, 100.0, 130.0)]


def test_determinism_bit_identical(tmp_path):
    p = random_profile(seed=11, duration=900.0, severity="moderate")
    a = generate_subject(p, CFG)
    b = generate_subject(p, CFG)
    assert a.beat.values.tobytes() == b.beat.values.tobytes()
    assert a.spo2.samples.tobytes() == b.spo2.samples.tobytes()
    assert a.truth_events == b.truth_events
    save_record(tmp_path / "a.rosac", a)
    save_record(tmp_path / "b.rosac", b)
    assert (tmp_path / "a.rosac").read_bytes() == (tmp_path / "b.rosac").read_bytes()


def test_overlapping_events_rejected():
    p = SubjectProfile(seed=3, duration=300.0,
                       event_plan=[PlannedEvent(EventKind.OA, 100.0, 30.0),
                                   PlannedEvent(EventKind.HP, 120.0, 20.0)])
    with pytest.raises(CohortError, match="overlap"):
        generate_subject(p, CFG)


def test_short_duration_rejected():
    with pytest.raises(CohortError, match="epoch"):
        generate_subject(SubjectProfile(seed=4, duration=10.0), CFG)


def test_short_event_rejected():
    p = SubjectProfile(seed=5, duration=300.0,
                       event_plan=[PlannedEvent(EventKind.CA, 50.0, 5.0)])
    with pytest.raises(CohortError, match="minimum"):
        generate_subject(p, CFG)


class TestRenderBeat:
    def test_static_target_columns_identical(self):
        cube = render_beat_signal(CFG, 0.8, np.zeros(100), snr_db=None)
        assert np.all(cube.values == cube.values[:, :1])

    def test_phase_law(self):
        t = np.arange(2000) / CFG.F
        d = 0.004 * np.sin(2 * np.pi * 0.3 * t)
        cube = render_beat_signal(CFG, 0.8, d, snr_db=None)
        # extract slow-time phase at fast-time sample 0 (pre-FFT, any sample works)
        phase = np.unwrap(np.angle(cube.values[0].astype(np.complex128)))
        expected = 4 * np.pi * d / CFG.lambda0
        offset = phase[0] - expected[0]
        np.testing.assert_allclose(phase - offset, expected, atol=1e-6)

    def test_quarter_wavelength_step_gives_pi(self):
        cfg = RadarConfig()
        d = np.array([0.0, cfg.lambda0 / 4.0])
        cube = render_beat_signal(cfg, 0.8, d, snr_db=None)
        vals = cube.values[0].astype(np.complex128)
        dphi = np.angle(vals[1] / vals[0])
        assert abs(abs(dphi) - np.pi) < 1e-6

    def test_range_beyond_unambiguous_rejected(self):
        with pytest.raises(CohortError, match="unambiguous"):
            render_beat_signal(CFG, CFG.max_unambiguous_range + 1.0, np.zeros(10))


class TestSpo2:
    def test_flat_without_events(self):
        p = SubjectProfile(seed=6, duration=120.0, spo2_baseline=97)
        trace = synthesize_spo2(p, [])
        assert np.all(trace.samples == 97)

    def test_desaturation_depth_and_timing(self):
        p = SubjectProfile(seed=7, duration=400.0, spo2_baseline=97,
                           event_plan=[PlannedEvent(EventKind.OA, 100.0, 30.0)],
                           od_coupling=[OdCoupling(depth=4, delay=15.0)])
        rec = generate_subject(p, CFG)
        trace = rec.spo2
        assert trace.samples.min() == 93
        t_min = int(np.argmin(trace.samples))
        assert t_min > 130 + 15  # after event end + delay
        # coupling invariant: nadir inside (end, end+delay+60]
        assert t_min <= 130 + 15 + 60

    def test_artifact_masked(self):
        p = SubjectProfile(seed=8, duration=120.0, artifact_plan=[(50, 255)])
        trace = synthesize_spo2(p, [])
        assert trace.samples[50] == 255
        assert not trace.valid[50]
        assert trace.valid[49] and trace.valid[51]

    def test_uncoupled_event_no_desaturation(self):
        p = SubjectProfile(seed=9, duration=400.0, spo2_baseline=96,
                           event_plan=[PlannedEvent(EventKind.CA, 100.0, 30.0)],
                           od_coupling=[OdCoupling(coupled=False)])
        trace = synthesize_spo2(p, [AnnotatedEvent(EventKind.CA, 100.0, 130.0)])
        assert np.all(trace.samples == 96)


class TestContainer:
    def _record(self):
        p = random_profile(seed=20, duration=600.0, severity="mild")
        return generate_subject(p, CFG, subject_id="t20")

    def test_roundtrip_equality(self, tmp_path):
        rec = self._record()
        save_record(tmp_path / "r.rosac", rec)
        back = load_record(tmp_path / "r.rosac")
        assert back.subject_id == rec.subject_id
        np.testing.assert_array_equal(back.beat.values, rec.beat.values)
        np.testing.assert_array_equal(back.spo2.samples, rec.spo2.samples)
        assert back.truth_events == rec.truth_events
        assert back.truth_hypnogram.stages == rec.truth_hypnogram.stages

    def test_checksum_failure(self, tmp_path):
        rec = self._record()
        path = tmp_path / "r.rosac"
        save_record(path, rec)
        raw = bytearray(path.read_bytes())
        raw[100] ^= 0xFF
        path.write_bytes(bytes(raw))
        with pytest.raises(ContainerChecksumError):
            load_record(path)

    def test_version_mismatch(self, tmp_path):
        rec = self._record()
        path = tmp_path / "r.rosac"
        save_record(path, rec)
        raw = bytearray(path.read_bytes())
        raw[:6] = b"ROSAC9"
        path.write_bytes(bytes(raw))
        with pytest.raises(ContainerVersionError):
            load_record(path)

    def test_magic_present(self, tmp_path):
        rec = self._record()
        path = tmp_path / "r.rosac"
        save_record(path, rec)
        assert path.read_bytes().startswith(MAGIC)


def test_fold_partition():
    folds = split_folds(list(range(4)), 4)
    flat = sorted(i for f in folds for i in f)
    assert flat == [0, 1, 2, 3]
    assert all(len(f) == 1 for f in folds)
