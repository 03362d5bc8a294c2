"""End-to-end orchestration: cohort synthesis, preprocessing, per-fold
training, inference and metric assembly, with content-hash caching."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..autodiff.checkpoint import load_checkpoint, restore, save_checkpoint
from ..autodiff.optim import TrainConfig
from ..cohort import (
    RadarConfig,
    SubjectRecord,
    generate_subject,
    load_record,
    random_profile,
    save_record,
    split_folds,
)
from ..cohort.types import AnnotatedEvent, EventKind, Hypnogram, SleepStage
from ..detector import DetectorModel, detect_events, nms_1d, train_detector
from ..detector.boxes import DetectedSegment
from ..metrics import (
    MetricsError,
    ahi_and_severity,
    average_precision_at_iou,
    bland_altman,
    cohens_kappa,
    diagnostic_stats,
    icc,
    pearson_r,
)
from ..oximetry import FusionNet, build_fusion_dataset, clean_trace, odi3, soft_fuse, train_fusion
from ..preproc import StackNormalizer, dump_stack, load_stack, preprocess_record
from ..stager import StagerModel, decode_hypnogram, epoch_slices, two_stage_train
from .config import REPORT_SCHEMA_VERSION, PipelineConfig


class StageError(RuntimeError):
    def __init__(self, stage: str, subject: str | None, cause: Exception):
        self.stage = stage
        self.subject = subject
        where = f" (subject {subject})" if subject else ""
        super().__init__(f"pipeline stage {stage!r}{where} failed: {cause}")


def _ensure_dir(path: Path) -> Path:
    path.mkdir(parents=True, exist_ok=True)
    return path


# -- cohort ------------------------------------------------------------------

def generate_cohort(cfg: PipelineConfig) -> list[SubjectRecord]:
    outdir = _ensure_dir(Path(cfg.outdir) / "cohort")
    radar = RadarConfig(F=cfg.radar_sample_rate, n=cfg.radar_fast_samples)
    records = []
    for i in range(cfg.n_subjects):
        key = cfg.cohort_key(i)
        path = outdir / f"s{i:02d}_{key}.rosac"
        try:
            if path.exists():
                records.append(load_record(path))
                continue
            severity = cfg.severities[i % len(cfg.severities)]
            profile = random_profile(seed=cfg.seed * 1009 + i,
                                     duration=cfg.duration_s, severity=severity)
            rec = generate_subject(profile, config=radar, subject_id=f"s{i:02d}")
            save_record(path, rec)
            records.append(rec)
        except StageError:
            raise
        except Exception as exc:
            raise StageError("gen-cohort", f"s{i:02d}", exc) from exc
    return records


def preprocess_cohort(cfg: PipelineConfig,
                      records: list[SubjectRecord]) -> list:
    outdir = _ensure_dir(Path(cfg.outdir) / "stacks")
    stacks = []
    for i, rec in enumerate(records):
        key = cfg.stack_key(i)
        path = outdir / f"s{i:02d}_{key}"
        try:
            if path.with_suffix(".json").exists():
                stacks.append(load_stack(path))
                continue
            stack = preprocess_record(rec.beat, frame_len=cfg.frame_len,
                                      frame_hop=cfg.frame_hop,
                                      range_gate=cfg.range_gate)
            dump_stack(stack, path)
            stacks.append(stack)
        except StageError:
            raise
        except Exception as exc:
            raise StageError("preprocess", rec.subject_id, exc) from exc
    return stacks


# -- training ----------------------------------------------------------------

@dataclass
class TrainedFold:
    fold: int
    test_indices: list[int]
    train_indices: list[int]
    detector: DetectorModel
    stager: StagerModel
    fusion: FusionNet
    normalizer: StackNormalizer


def _stage_ints(hyp: Hypnogram) -> np.ndarray:
    return np.array([s.value for s in hyp.stages], dtype=int)


def _stager_records(cfg, stacks_norm, records, indices):
    out = []
    for i in indices:
        slices = epoch_slices(stacks_norm[i], epoch_len=cfg.epoch_len)
        stages = _stage_ints(records[i].truth_hypnogram)
        n = min(len(slices), len(stages))
        step = 120  # bounded sequence length keeps graphs small
        for lo in range(0, n, step):
            hi = min(lo + step, n)
            if hi - lo >= 2:
                out.append((slices[lo:hi], stages[lo:hi]))
    return out


def train_fold(cfg: PipelineConfig, fold: int, test_idx: list[int],
               train_idx: list[int], records, stacks) -> TrainedFold:
    outdir = _ensure_dir(Path(cfg.outdir) / "models")
    key = cfg.training_key(fold)
    stem = outdir / f"fold{fold}_{key}"
    n_bins = stacks[0].channels.shape[1]
    detector = DetectorModel(n_bins, seed=cfg.seed + fold)
    stager = StagerModel(seed=cfg.seed + fold)
    fusion = FusionNet(seed=cfg.seed + fold)
    norm_path = stem.parent / (stem.name + "_norm.json")
    paths = {name: stem.parent / f"{stem.name}_{name}"
             for name in ("detector", "stager", "fusion")}
    if norm_path.exists() and all(p.with_suffix(".json").exists()
                                  for p in paths.values()):
        normalizer = StackNormalizer.load(norm_path)
        for model, p in ((detector, paths["detector"]), (stager, paths["stager"]),
                         (fusion, paths["fusion"])):
            saved, _ = load_checkpoint(p)
            restore(model.parameters(), saved)
        fusion.trained = True
        return TrainedFold(fold, test_idx, train_idx, detector, stager, fusion,
                           normalizer)

    try:
        normalizer = StackNormalizer().fit([stacks[i] for i in train_idx])
        norm = normalizer.transform(list(stacks))
        det_records = [(norm[i].channels, records[i].truth_events) for i in train_idx]
        val_records = det_records[-1:]
        det_cfg = TrainConfig(lr=cfg.detector_lr, epochs=cfg.detector_epochs,
                              seed=cfg.seed + fold)
        det_res = train_detector(det_records, val_records, det_cfg,
                                 frame_hop=cfg.frame_hop,
                                 chunks_per_epoch=cfg.detector_chunks_per_epoch,
                                 eval_every=cfg.detector_eval_every,
                                 top_proposals=cfg.top_proposals, model=detector)
        stg_cfg = TrainConfig(lr=cfg.stager_lr, epochs=1, seed=cfg.seed + fold)
        two_stage_train(_stager_records(cfg, norm, records, train_idx), stg_cfg,
                        stage1_epochs=cfg.stager_stage1_epochs,
                        stage2_epochs=cfg.stager_stage2_epochs, model=stager)
        fusion_records = [(records[i].truth_events,
                           clean_trace(records[i].spo2),
                           records[i].truth_hypnogram) for i in train_idx]
        dataset = build_fusion_dataset(fusion_records, seed=cfg.seed + fold)
        train_fusion(dataset, TrainConfig(lr=cfg.fusion_lr, epochs=cfg.fusion_epochs,
                                          seed=cfg.seed + fold), net=fusion)
    except StageError:
        raise
    except Exception as exc:
        raise StageError("train", f"fold{fold}", exc) from exc

    normalizer.save(norm_path)
    for model, p in ((detector, paths["detector"]), (stager, paths["stager"]),
                     (fusion, paths["fusion"])):
        save_checkpoint(p, model.parameters(), meta={"fold": fold, "key": key})
    return TrainedFold(fold, test_idx, train_idx, detector, stager, fusion,
                       normalizer)


# -- inference ---------------------------------------------------------------

def _segment_to_row(seg: DetectedSegment) -> dict:
    return {"kind": seg.kind.name, "score": seg.score, "t_start": seg.t_start,
            "t_end": seg.t_end, "spo2_score": seg.spo2_score,
            "fused_score": seg.fused_score}


def _row_to_segment(row: dict) -> DetectedSegment:
    return DetectedSegment(kind=EventKind[row["kind"]], score=row["score"],
                           t_start=row["t_start"], t_end=row["t_end"],
                           spo2_score=row["spo2_score"],
                           fused_score=row["fused_score"])


def infer_subject(cfg: PipelineConfig, tf: TrainedFold, subject: int,
                  records, stacks) -> dict:
    outdir = _ensure_dir(Path(cfg.outdir) / "inference")
    key = cfg.inference_key(subject, tf.fold)
    path = outdir / f"s{subject:02d}_fold{tf.fold}_{key}.json"
    if path.exists():
        return json.loads(path.read_text())
    rec = records[subject]
    try:
        stack = tf.normalizer.transform(stacks[subject])
        detection = detect_events(tf.detector, stack.channels,
                                  frame_hop=cfg.frame_hop,
                                  top_proposals=cfg.top_proposals,
                                  score_threshold=cfg.score_threshold)
        trace = clean_trace(rec.spo2)
        fused = soft_fuse([_row_to_segment(_segment_to_row(s))
                           for s in detection.segments], trace, tf.fusion,
                          omega=cfg.omega, score_threshold=cfg.score_threshold)
        hyp = decode_hypnogram(tf.stager, epoch_slices(stack, cfg.epoch_len),
                               epoch_len=cfg.epoch_len)
        est_tst = hyp.tst_hours()
        counted = nms_1d(fused, iou_threshold=cfg.count_iou,
                         score_threshold=cfg.count_threshold,
                         use_fused=True, class_agnostic=True)
        if est_tst > 0:
            est = ahi_and_severity(counted, hyp)
            est_ahi, est_sev = est.ahi, est.severity
        else:
            est_ahi, est_sev = 0.0, "Healthy"
        truth_hyp = rec.truth_hypnogram
        true_segments = [DetectedSegment(kind=e.kind, score=1.0, t_start=e.t_start,
                                         t_end=e.t_end) for e in rec.truth_events]
        true_rep = ahi_and_severity(true_segments, truth_hyp)
        payload = {
            "subject": rec.subject_id,
            "fold": tf.fold,
            "radar_segments": [_segment_to_row(s) for s in detection.segments],
            "fused_segments": [_segment_to_row(s) for s in fused],
            "pred_stages": [s.name for s in hyp.stages],
            "true_stages": [s.name for s in truth_hyp.stages],
            "est_tst": est_tst,
            "true_tst": truth_hyp.tst_hours(),
            "est_ahi": est_ahi,
            "true_ahi": true_rep.ahi,
            "est_severity": est_sev,
            "true_severity": true_rep.severity,
            "odi3": (odi3(trace, truth_hyp.tst_hours())
                     if not trace.all_invalid and truth_hyp.tst_hours() > 0 else None),
        }
    except StageError:
        raise
    except Exception as exc:
        raise StageError("inference", rec.subject_id, exc) from exc
    path.write_text(json.dumps(payload, sort_keys=True))
    return payload


# -- metric assembly ---------------------------------------------------------

def _staging_block(results: list[dict]) -> dict:
    from ..cohort.types import GRANULARITIES
    block = {}
    for gran, mapping in GRANULARITIES.items():
        pred, true = [], []
        for r in results:
            n = min(len(r["pred_stages"]), len(r["true_stages"]))
            pred += [mapping[SleepStage[s]] for s in r["pred_stages"][:n]]
            true += [mapping[SleepStage[s]] for s in r["true_stages"][:n]]
        acc = float(np.mean([p == t for p, t in zip(pred, true)])) if pred else None
        block[gran] = {"accuracy": acc, "kappa": cohens_kappa(pred, true) if pred else None}
    return block


def _ap_block(results: list[dict], use_fused: bool) -> dict:
    dets, truths = [], []
    for i, r in enumerate(results):
        rows = r["fused_segments"] if use_fused else r["radar_segments"]
        for row in rows:
            dets.append((i, _row_to_segment(row)))
        for row in r["true_events"]:
            truths.append((i, AnnotatedEvent(kind=EventKind[row["kind"]],
                                             t_start=row["t_start"],
                                             t_end=row["t_end"])))
    rep = average_precision_at_iou(dets, truths, use_fused=use_fused)
    return {"overall": rep.overall, "per_class": rep.per_class,
            "n_truths": rep.n_truths, "n_detections": rep.n_detections}


def _agreement_block(results: list[dict], est_key: str, true_key: str) -> dict:
    est = [r[est_key] for r in results]
    true = [r[true_key] for r in results]
    block: dict = {"est": est, "true": true, "icc": None, "pearson_r": None,
                   "bland_altman": None}
    for name, fn in (("icc", icc), ("pearson_r", pearson_r)):
        try:
            block[name] = fn(est, true)
        except MetricsError:
            pass
    try:
        mean, lo, hi = bland_altman(est, true)
        block["bland_altman"] = {"mean": mean, "loa_low": lo, "loa_high": hi}
    except MetricsError:
        pass
    return block


def run_pipeline(cfg: PipelineConfig) -> dict:
    _ensure_dir(Path(cfg.outdir))
    records = generate_cohort(cfg)
    stacks = preprocess_cohort(cfg, records)
    folds = split_folds(records, cfg.folds)
    all_idx = set(range(len(records)))
    results: list[dict] = []
    fold_blocks = []
    for f, test_idx in enumerate(folds):
        train_idx = sorted(all_idx - set(test_idx))
        tf = train_fold(cfg, f, list(test_idx), train_idx, records, stacks)
        fold_results = []
        for i in test_idx:
            payload = infer_subject(cfg, tf, i, records, stacks)
            payload["true_events"] = [{"kind": e.kind.name, "t_start": e.t_start,
                                       "t_end": e.t_end}
                                      for e in records[i].truth_events]
            fold_results.append(payload)
        results += fold_results
        fold_blocks.append({
            "fold": f,
            "test_subjects": [records[i].subject_id for i in test_idx],
            "ap": _ap_block(fold_results, use_fused=False),
            "ap_fused": _ap_block(fold_results, use_fused=True),
            "staging": _staging_block(fold_results),
            "subjects": [{k: r[k] for k in ("subject", "est_ahi", "true_ahi",
                                            "est_tst", "true_tst", "est_severity",
                                            "true_severity", "odi3")}
                         for r in fold_results],
            "detail": [{k: r[k] for k in ("subject", "true_events",
                                          "fused_segments")}
                       for r in fold_results],
        })
    diag = diagnostic_stats([r["est_ahi"] for r in results],
                            [r["true_ahi"] for r in results])
    pooled = {
        "ap": _ap_block(results, use_fused=False),
        "ap_fused": _ap_block(results, use_fused=True),
        "staging": _staging_block(results),
        "ahi": _agreement_block(results, "est_ahi", "true_ahi"),
        "tst": _agreement_block(results, "est_tst", "true_tst"),
        "diagnostics": [{"threshold": row.threshold, "sensitivity": row.sensitivity,
                         "specificity": row.specificity, "accuracy": row.accuracy,
                         "kappa": row.kappa} for row in diag.per_threshold],
        "severity_confusion": diag.severity_confusion.tolist(),
    }
    report = {"schema_version": REPORT_SCHEMA_VERSION, "config": cfg.to_dict(),
              "folds": fold_blocks, "pooled": pooled}
    report_path = Path(cfg.outdir) / "report.json"
    report_path.write_text(json.dumps(report, sort_keys=True, indent=1))
    return report


def sweep_omega(cfg: PipelineConfig,
                omegas=(0.0, 0.25, 0.5, 0.75, 1.0)) -> list[dict]:
    """Fused AP per weighting; the 0 entry must equal radar-only AP."""
    base = run_pipeline(cfg)
    records = generate_cohort(cfg)
    stacks = preprocess_cohort(cfg, records)
    folds = split_folds(records, cfg.folds)
    all_idx = set(range(len(records)))
    rows = []
    radar_ap = base["pooled"]["ap"]["overall"]
    for omega in omegas:
        results = []
        for f, test_idx in enumerate(folds):
            train_idx = sorted(all_idx - set(test_idx))
            tf = train_fold(cfg, f, list(test_idx), train_idx, records, stacks)
            for i in test_idx:
                payload = dict(infer_subject(cfg, tf, i, records, stacks))
                trace = clean_trace(records[i].spo2)
                segs = [_row_to_segment(r) for r in payload["radar_segments"]]
                fused = soft_fuse(segs, trace, tf.fusion, omega=omega,
                                  score_threshold=cfg.score_threshold)
                payload["fused_segments"] = [_segment_to_row(s) for s in fused]
                payload["true_events"] = [{"kind": e.kind.name, "t_start": e.t_start,
                                           "t_end": e.t_end}
                                          for e in records[i].truth_events]
                results.append(payload)
        ap = _ap_block(results, use_fused=True)["overall"]
        rows.append({"omega": omega, "ap_fused": ap, "ap_radar": radar_ap})
    out = Path(cfg.outdir) / "omega_sweep.json"
    out.write_text(json.dumps(rows, sort_keys=True, indent=1))
    return rows
