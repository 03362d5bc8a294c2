"""Acceptance gate: one test per release criterion, with pinned tolerances.

Each test states its budget (instances, tolerance, runtime) inline; the
heavyweight end-to-end check (criterion 6) drives the full cross-validated
pipeline on a 12-subject overnight cohort and is the slow one by design.
"""
import dataclasses
import json
import shutil
import time
from pathlib import Path

import numpy as np
import pytest

from rosa.autodiff import Tensor, grad_check
from rosa.autodiff.checkpoint import load_checkpoint, save_checkpoint
from rosa.autodiff.optim import TrainConfig
from rosa.cohort import RadarConfig, render_beat_signal
from rosa.cohort.types import AnnotatedEvent, EventKind, Hypnogram, SleepStage, SpO2Trace
from rosa.detector import (
    DetectedSegment,
    DetectorModel,
    decode_center_width,
    detection_loss,
    encode_offsets,
    iou_1d,
    nms_1d,
    roi_align_1d,
)
from rosa.metrics import (
    ahi_and_severity,
    average_precision_at_iou,
    bland_altman,
    cohens_kappa,
    icc,
    severity_of,
)
from rosa.oximetry import FusionNet, build_fusion_dataset, clean_trace, fusion_loss, soft_fuse, train_fusion
from rosa.pipeline import PipelineConfig, run_pipeline
from rosa.preproc import compute_spectrogram_stack, range_transform
from rosa.stager import (
    StagerModel,
    change_loss,
    crf_log_partition,
    crf_loss,
    crf_score,
    duration_loss,
    focal_loss,
    two_stage_train,
    viterbi_decode,
)

from spo2_cases import CASES


def _enumerate_paths(n: int, k: int) -> np.ndarray:
    """(n, k^n) all state sequences, lexicographic order."""
    return np.indices((k,) * n).reshape(n, -1)


def _path_scores(logits: np.ndarray, transitions: np.ndarray,
                 paths: np.ndarray) -> np.ndarray:
    n = logits.shape[0]
    scores = logits[np.arange(n)[:, None], paths].sum(axis=0)
    if n > 1:
        scores = scores + transitions[paths[:-1], paths[1:]].sum(axis=0)
    return scores


def test_01_crf_matches_exhaustive_enumeration():
    """Forward-algorithm partition and Viterbi equal brute-force enumeration:
    200 instances, N <= 8, 5 stages, tolerance 1e-10, < 10 s."""
    rng = np.random.default_rng(101)
    t0 = time.monotonic()
    path_cache = {n: _enumerate_paths(n, 5) for n in range(2, 9)}
    for _ in range(200):
        n = int(rng.integers(2, 9))
        logits = rng.normal(size=(n, 5)) * 2.0
        trans = rng.normal(size=(5, 5))
        paths = path_cache[n]
        scores = _path_scores(logits, trans, paths)
        m = scores.max()
        ref_logz = m + np.log(np.exp(scores - m).sum())
        got_logz = crf_log_partition(Tensor(logits), Tensor(trans)).item()
        assert got_logz == pytest.approx(ref_logz, abs=1e-10)
        best = paths[:, int(np.argmax(scores))]
        assert np.array_equal(viterbi_decode(logits, trans), best)
        # the NLL ties score and partition together
        y = rng.integers(0, 5, size=n)
        nll = crf_loss(Tensor(logits), Tensor(trans), y).item()
        ref_nll = ref_logz - _path_scores(logits, trans, y[:, None])[0]
        assert nll == pytest.approx(ref_nll, abs=1e-10)
    assert time.monotonic() - t0 < 10.0


def _brute_nms(segments, iou_thr=0.5, score_thr=0.05):
    pool = sorted([s for s in segments if s.score >= score_thr],
                  key=lambda s: (-s.score, s.t_start, s.t_end))
    kept = []
    for cand in pool:
        if all(k.kind is not cand.kind
               or iou_1d(k.interval, cand.interval) < iou_thr for k in kept):
            kept.append(cand)
    return sorted(kept, key=lambda s: (s.t_start, s.t_end))


def _brute_ap(dets, truths, thr=0.5):
    """Literal greedy matching plus rectangle integration of the envelope."""
    order = sorted(range(len(dets)),
                   key=lambda i: (-dets[i][1].score, dets[i][1].t_start, i))
    used, flags = set(), []
    for i in order:
        rec, seg = dets[i]
        cands = [(iou_1d(seg.interval, (ev.t_start, ev.t_end)), j)
                 for j, (trec, ev) in enumerate(truths)
                 if j not in used and trec == rec and ev.kind is seg.kind
                 and iou_1d(seg.interval, (ev.t_start, ev.t_end)) >= thr]
        if cands:
            cands.sort(key=lambda c: (-c[0], c[1]))
            used.add(cands[0][1])
            flags.append(1)
        else:
            flags.append(0)
    points, tp = [], 0
    for k, f in enumerate(flags, start=1):
        tp += f
        points.append((tp / len(truths), tp / k))
    ap, prev_r = 0.0, 0.0
    for r, _ in points:
        if r <= prev_r:
            continue
        ap += (r - prev_r) * max(p for rr, p in points if rr >= r)
        prev_r = r
    return ap


def test_02_detection_math_oracles():
    """Encode/decode round-trip (1e-12), IoU vs interval arithmetic, NMS and
    AP vs brute force, >= 200 seeded instances each, < 30 s."""
    rng = np.random.default_rng(202)
    t0 = time.monotonic()
    kinds = [EventKind.CA, EventKind.OA, EventKind.MA, EventKind.HP]
    for _ in range(200):
        # round-trip through the anchor parameterization
        xa, wa = rng.uniform(0, 600), rng.uniform(5, 180)
        xg, wg = rng.uniform(0, 600), rng.uniform(5, 180)
        tx, tw = encode_offsets(xa, wa, xg, wg)
        x2, w2 = decode_center_width(xa, wa, tx, tw)
        assert x2 == pytest.approx(xg, abs=1e-12)
        assert w2 == pytest.approx(wg, abs=1e-12)

        # IoU against direct interval arithmetic
        a = np.sort(rng.uniform(0, 100, 2))
        b = np.sort(rng.uniform(0, 100, 2))
        inter = max(0.0, min(a[1], b[1]) - max(a[0], b[0]))
        union = (a[1] - a[0]) + (b[1] - b[0]) - inter
        ref = inter / union if inter > 0 and union > 0 else 0.0
        assert iou_1d(tuple(a), tuple(b)) == pytest.approx(ref, abs=1e-12)

        # NMS against the brute-force definition, <= 10 segments
        segs = []
        for _ in range(int(rng.integers(1, 11))):
            s = rng.uniform(0, 200)
            segs.append(DetectedSegment(kind=kinds[rng.integers(4)],
                                        score=float(rng.uniform(0, 1)),
                                        t_start=s, t_end=s + rng.uniform(5, 60)))
        assert nms_1d(segs) == _brute_nms(segs)

        # AP against brute-force matching, <= 10 detections/truths
        dets, truths = [], []
        for _ in range(int(rng.integers(1, 11))):
            s = rng.uniform(0, 300)
            truths.append((0, AnnotatedEvent(kinds[rng.integers(4)], s, s + rng.uniform(10, 40))))
        for _ in range(int(rng.integers(1, 11))):
            s = rng.uniform(0, 300)
            dets.append((0, DetectedSegment(kind=kinds[rng.integers(4)],
                                            score=float(rng.uniform(0, 1)),
                                            t_start=s, t_end=s + rng.uniform(10, 40))))
        got = average_precision_at_iou(dets, truths).overall
        assert got == pytest.approx(_brute_ap(dets, truths), abs=1e-12)
    assert time.monotonic() - t0 < 30.0


def test_03_gradient_suite():
    """Every differentiable component passes central finite differences:
    max relative error < 1e-4 at h = 1e-5, < 2 min total."""
    t0 = time.monotonic()
    rng = np.random.default_rng(303)
    tol, h = 1e-4, 1e-5

    logits = Tensor(rng.normal(size=(7, 5)), requires_grad=True)
    truth = rng.integers(0, 5, size=7)
    w = rng.uniform(0.5, 2.0, size=5)
    assert grad_check(lambda: focal_loss(logits, truth, w),
                      {"logits": logits}, h=h).ok(tol)
    assert grad_check(lambda: change_loss(logits), {"logits": logits}, h=h).ok(tol)
    assert grad_check(lambda: duration_loss(logits), {"logits": logits}, h=h).ok(tol)
    assert grad_check(lambda: duration_loss(logits, printed_recurrence=True),
                      {"logits": logits}, h=h).ok(tol)

    trans = Tensor(rng.normal(size=(5, 5)), requires_grad=True)
    states = rng.integers(0, 5, size=7)
    assert grad_check(lambda: crf_loss(logits, trans, states),
                      {"logits": logits, "trans": trans}, h=h).ok(tol)
    assert grad_check(lambda: crf_score(logits, trans, states)
                      + crf_log_partition(logits, trans),
                      {"logits": logits, "trans": trans}, h=h).ok(tol)

    feat = Tensor(rng.normal(size=(4, 8)), requires_grad=True)
    target = rng.normal(size=(4, 6))
    def roi():
        d = roi_align_1d(feat, 4.0, 3.0, 27.0, 6) - Tensor(target)
        return (d * d).sum()
    assert grad_check(roi, {"feat": feat}, h=h).ok(tol)

    model = DetectorModel(6, seed=3)
    channels = Tensor(rng.normal(size=(3, 6, 64)) * 0.1)
    events = [AnnotatedEvent(EventKind.OA, 18.0, 40.0),
              AnnotatedEvent(EventKind.HP, 46.0, 58.0)]
    def det():
        loss, _ = detection_loss(model, channels, events,
                                 rng=np.random.default_rng(0))
        return loss
    assert grad_check(det, model.parameters(), h=h,
                      max_entries_per_param=3, rng=rng).ok(tol)

    net = FusionNet(seed=3)
    feats = rng.normal(size=(12, 4))
    labels = rng.integers(0, 5, size=12)
    assert grad_check(lambda: fusion_loss(net, feats, labels),
                      net.parameters(), h=h, max_entries_per_param=4,
                      rng=rng).ok(tol)
    assert time.monotonic() - t0 < 120.0


def test_04_preprocessing_physics():
    """Noise-free 0.3 Hz breathing at 0.8 m with the default radar settings:
    range peak at bin 16 +- 1, slow-time phase law 4*pi*(R0+d)/lambda0 within
    1e-6 rad, dominant respiration frequency 0.3 Hz within one bin, < 30 s."""
    t0 = time.monotonic()
    cfg = RadarConfig()          # f0 60 GHz, B 3 GHz, F 250 Hz, n 256
    r0, f_breath, duration = 0.8, 0.3, 240.0
    t = np.arange(int(duration * cfg.F)) / cfg.F
    d = 0.004 * np.sin(2 * np.pi * f_breath * t)
    beat = render_beat_signal(cfg, r0, d, snr_db=None)
    rtm = range_transform(beat)

    peak_bin = int(np.argmax(np.abs(rtm.values).mean(axis=1)))
    assert abs(peak_bin - 16) <= 1

    phase = np.unwrap(np.angle(rtm.values[peak_bin]))
    expected = 4.0 * np.pi * (r0 + d) / cfg.lambda0
    residual = phase - expected
    residual -= residual.mean()
    assert np.abs(residual).max() < 1e-6

    stack = compute_spectrogram_stack(rtm, frame_len=30.0, frame_hop=1.0,
                                      range_gate=(0.3, 1.5))
    bin_width = 1.0 / 30.0
    x_d = stack.channels[2, peak_bin - stack.range_window[0]]
    assert np.all(np.abs(x_d - f_breath) <= bin_width + 1e-12)
    assert time.monotonic() - t0 < 30.0


def test_05_spo2_rule_fidelity():
    """All 20 hand-built oximetry traces agree exactly with the cleaning,
    segmentation, thresholding and fallback rules."""
    assert len(CASES) == 20
    for name, case in CASES:
        case()


# -- criterion 6: end-to-end synthetic agreement ------------------------------

COHORT_CONFIG = dict(seed=3, n_subjects=12, folds=4, duration_s=28800.0,
                     detector_epochs=5, detector_chunks_per_epoch=100,
                     detector_eval_every=2, stager_stage1_epochs=4,
                     stager_stage2_epochs=2, fusion_epochs=200)


def test_06_end_to_end_synthetic_agreement(tmp_path):
    """12 subjects x ~8 h, mixed severities, 4-fold cross-validation:
    ICC(estimated AHI, true AHI) >= 0.80 and wake/sleep accuracy >= 85%.
    Runtime target 30 min; hard-capped only against pathological blowups."""
    t0 = time.monotonic()
    cfg = PipelineConfig(outdir=str(tmp_path / "e2e"), **COHORT_CONFIG)
    report = run_pipeline(cfg)
    elapsed = time.monotonic() - t0
    pooled = report["pooled"]
    assert pooled["ahi"]["icc"] is not None
    assert pooled["ahi"]["icc"] >= 0.80
    assert pooled["staging"]["WS"]["accuracy"] >= 0.85
    assert elapsed < 3600.0


# -- criterion 7: fusion direction --------------------------------------------

def _coupled_world(seed):
    """Truth events with >= 80% desaturation coupling, plus detections with
    injected false positives (10% of detections, score ~ U[0.4, 0.7])."""
    rng = np.random.default_rng(seed)
    n_events, spacing, dur = 40, 300.0, 20.0
    kinds = [EventKind.OA, EventKind.CA, EventKind.HP, EventKind.MA]
    events = [AnnotatedEvent(kinds[i % 4], 100.0 + spacing * i,
                             100.0 + spacing * i + dur)
              for i in range(n_events)]
    duration = int(100 + spacing * n_events + 200)
    hyp = Hypnogram(stages=[SleepStage.N2] * (duration // 30))

    samples = np.full(duration, 96, dtype=np.uint8)
    coupled = rng.permutation(n_events)[:int(0.85 * n_events)]
    for i in coupled:
        onset = int(events[i].t_end) + 3
        depth = int(rng.integers(4, 9))
        fall = np.linspace(96, 96 - depth, 7).round().astype(np.uint8)
        samples[onset:onset + 7] = fall
        samples[onset + 7:onset + 19] = 96 - depth
        rise = np.linspace(96 - depth, 96, 7).round().astype(np.uint8)
        samples[onset + 19:onset + 26] = rise
    trace = clean_trace(samples)

    dets = [DetectedSegment(kind=ev.kind, score=float(rng.uniform(0.5, 0.9)),
                            t_start=ev.t_start + rng.uniform(-2, 2),
                            t_end=ev.t_end + rng.uniform(-2, 2))
            for ev in events]
    n_fp = round(0.1 * n_events)
    fp_slots = rng.choice(n_events, size=n_fp, replace=False)
    for i in fp_slots:
        s = 100.0 + spacing * i + 120.0
        dets.append(DetectedSegment(kind=kinds[int(rng.integers(4))],
                                    score=float(rng.uniform(0.4, 0.7)),
                                    t_start=s, t_end=s + 15.0))
    return events, hyp, trace, dets


def test_07_fusion_improves_ap_direction():
    """Soft decision fusion never hurts AP@0.5 on desaturation-coupled
    cohorts, and omega = 0 reproduces the radar-only AP exactly; 5 seeds."""
    for seed in range(5):
        events, hyp, trace, dets = _coupled_world(seed)
        net = train_fusion(build_fusion_dataset([(events, trace, hyp)], seed=seed),
                           TrainConfig(lr=5e-3, epochs=200, seed=seed))
        truths = [(0, ev) for ev in events]
        before = average_precision_at_iou([(0, s) for s in dets], truths).overall

        fused = soft_fuse(dets, trace, net, omega=0.5)
        after = average_precision_at_iou([(0, s) for s in fused], truths,
                                         use_fused=True).overall
        assert after >= before - 1e-12

        radar_only = soft_fuse(dets, trace, net, omega=0.0)
        ap0 = average_precision_at_iou([(0, s) for s in radar_only], truths,
                                       use_fused=True).overall
        assert ap0 == before


def test_08_two_stage_training_checkpoint_diff(tmp_path):
    """Stage 1 leaves the transition matrix at initialization (all zeros);
    stage 2 modifies it; verified on the serialized checkpoints."""
    rng = np.random.default_rng(8)
    epochs = rng.normal(size=(8, 3, 4, 6)) * 0.1
    stages = np.full(8, 3)
    records = [(epochs, stages)]
    model = StagerModel(seed=8)
    cfg = TrainConfig(lr=1e-2, epochs=1, seed=8)

    two_stage_train(records, cfg, stage1_epochs=3, stage2_epochs=0,
                    gamma=0.0, model=model)
    save_checkpoint(tmp_path / "stage1", model.parameters(), meta={})
    two_stage_train(records, cfg, stage1_epochs=0, stage2_epochs=3,
                    gamma=0.0, model=model)
    save_checkpoint(tmp_path / "stage2", model.parameters(), meta={})

    p1, _ = load_checkpoint(tmp_path / "stage1")
    p2, _ = load_checkpoint(tmp_path / "stage2")
    assert np.array_equal(p1["transitions"], np.zeros((5, 5)))
    assert not np.array_equal(p2["transitions"], p1["transitions"])
    assert sorted(p1) == sorted(p2)


def test_09_metrics_hand_tables():
    """Hand-verifiable agreement arithmetic, exact or to 1e-10."""
    # kappa = 0.6 on the symmetric (40, 10, 10, 40) table
    pred = [0] * 50 + [1] * 50
    true = [0] * 40 + [1] * 10 + [0] * 10 + [1] * 40
    assert cohens_kappa(pred, true) == pytest.approx(0.6, abs=1e-12)

    # ICC(2,1) on judges 1-2 of the classic 6-target reliability table
    x = [9.0, 6.0, 8.0, 7.0, 10.0, 6.0]
    y = [2.0, 1.0, 4.0, 1.0, 5.0, 2.0]
    assert icc(x, y) == pytest.approx(24.0 / 191.0, abs=1e-10)

    # Bland-Altman on differences {1, -1}: LoA = +-1.96 sqrt(2)
    mean, lo, hi = bland_altman([1.0, 0.0], [0.0, 1.0])
    assert mean == pytest.approx(0.0, abs=1e-15)
    assert lo == pytest.approx(-1.96 * np.sqrt(2.0), abs=1e-12)
    assert hi == pytest.approx(1.96 * np.sqrt(2.0), abs=1e-12)

    # events per hour of sleep, midpoint-in-sleep rule
    hyp = Hypnogram(stages=[SleepStage.W] * 120 + [SleepStage.N2] * 480)
    segs = [DetectedSegment(EventKind.OA, 0.9, 3700.0, 3720.0),
            DetectedSegment(EventKind.CA, 0.9, 5000.0, 5020.0),
            DetectedSegment(EventKind.HP, 0.9, 9000.0, 9030.0),
            DetectedSegment(EventKind.MA, 0.9, 100.0, 130.0)]  # midpoint in wake
    rep = ahi_and_severity(segs, hyp)
    assert rep.tst_hours == 4.0
    assert (rep.n_apnea, rep.n_hypopnea) == (2, 1)
    assert rep.ahi == 0.75 and rep.severity == "Healthy"

    # half-open severity bands at 5 / 15 / 30
    assert [severity_of(v) for v in (4.999, 5.0, 14.999, 15.0, 29.999, 30.0)] == \
        ["Healthy", "Mild", "Mild", "Moderate", "Moderate", "Severe"]


def test_10_pipeline_determinism(tmp_path):
    """The same configuration run twice from scratch produces byte-identical
    reports and checkpoints."""
    outdir = tmp_path / "det"
    cfg = PipelineConfig(outdir=str(outdir), seed=5, n_subjects=4, folds=2,
                         duration_s=3600.0, detector_epochs=2,
                         detector_chunks_per_epoch=8, detector_eval_every=1,
                         stager_stage1_epochs=2, stager_stage2_epochs=1,
                         fusion_epochs=30)

    def run_and_capture():
        run_pipeline(cfg)
        captured = {}
        for path in sorted(outdir.rglob("*")):
            if path.is_file() and (path.name == "report.json"
                                   or path.parent.name == "models"):
                captured[str(path.relative_to(outdir))] = path.read_bytes()
        shutil.rmtree(outdir)
        return captured

    first = run_and_capture()
    second = run_and_capture()
    assert sorted(first) == sorted(second)
    assert all(first[k] == second[k] for k in first)
    assert any(k.endswith("report.json") for k in first)
    assert any(".bin" in k for k in first)
