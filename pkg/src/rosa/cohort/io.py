"""Versioned on-disk container for subject recordings.

One file per subject: magic ``ROSAC1``, radar-config header, complex beat
samples as interleaved little-endian f32 (re, im) in fast-time-major order,
the SpO2 byte array, a structured text block with labels, and a trailing
CRC-32 of everything after the magic. A JSON sidecar mirrors the labels.
"""
from __future__ import annotations

import json
import struct
import zlib
from pathlib import Path

import numpy as np

from .types import (AnnotatedEvent, BeatSignalCube, EventKind, Hypnogram, RadarConfig,
                    SleepStage, SpO2Trace, SubjectRecord)

MAGIC = b"ROSAC1"


class ContainerError(RuntimeError):
    pass


class ContainerVersionError(ContainerError):
    pass


class ContainerTruncatedError(ContainerError):
    pass


class ContainerChecksumError(ContainerError):
    pass


def _pack_record(record: SubjectRecord) -> bytes:
    cfg = record.config
    parts = [struct.pack("<7dI", cfg.f0, cfg.B, cfg.F, cfg.T_r, cfg.c,
                         cfg.K, cfg.lambda0, cfg.n)]
    sid = record.subject_id.encode()
    parts.append(struct.pack("<H", len(sid)) + sid)
    beat = np.ascontiguousarray(record.beat.values, dtype="<c8")
    parts.append(struct.pack("<Q", beat.shape[1]))
    parts.append(beat.tobytes())
    spo2 = record.spo2.samples
    parts.append(struct.pack("<Q", len(spo2)) + spo2.tobytes())
    lines = [f"epoch_len {record.truth_hypnogram.epoch_len:.6g}"]
    for ev in record.truth_events:
        lines.append(f"event {ev.kind.value} {ev.t_start!r} {ev.t_end!r}")
    for i, s in enumerate(record.truth_hypnogram.stages):
        lines.append(f"stage {i} {s.name}")
    text = "\n".join(lines).encode()
    parts.append(struct.pack("<I", len(text)) + text)
    return b"".join(parts)


def save_record(path: str | Path, record: SubjectRecord):
    path = Path(path)
    body = _pack_record(record)
    crc = zlib.crc32(body) & 0xFFFFFFFF
    path.write_bytes(MAGIC + body + struct.pack("<I", crc))
    sidecar = {
        "subject_id": record.subject_id,
        "epoch_len": record.truth_hypnogram.epoch_len,
        "events": [[e.kind.value, e.t_start, e.t_end] for e in record.truth_events],
        "hypnogram": [s.name for s in record.truth_hypnogram.stages],
        "spo2_len": len(record.spo2),
    }
    path.with_suffix(".json").write_text(json.dumps(sidecar, indent=1))


def load_record(path: str | Path) -> SubjectRecord:
    raw = Path(path).read_bytes()
    if len(raw) < len(MAGIC) + 4:
        raise ContainerTruncatedError(f"{path}: file too small")
    if raw[:4] != MAGIC[:4] or not raw.startswith(b"ROSA"):
        raise ContainerError(f"{path}: not a cohort container")
    if raw[:6] != MAGIC:
        raise ContainerVersionError(f"{path}: unsupported container version {raw[4:6]!r}")
    body, (crc_stored,) = raw[6:-4], struct.unpack("<I", raw[-4:])
    if zlib.crc32(body) & 0xFFFFFFFF != crc_stored:
        raise ContainerChecksumError(f"{path}: checksum mismatch")
    off = 0

    def take(n: int) -> bytes:
        nonlocal off
        if off + n > len(body):
            raise ContainerTruncatedError(f"{path}: truncated body")
        chunk = body[off:off + n]
        off += n
        return chunk

    f0, bw, frame, t_r, c, _k, _lam, n_fast = struct.unpack("<7dI", take(60))
    cfg = RadarConfig(f0=f0, B=bw, F=frame, n=n_fast, T_r=t_r, c=c)
    (sid_len,) = struct.unpack("<H", take(2))
    sid = take(sid_len).decode()
    (n_chirps,) = struct.unpack("<Q", take(8))
    beat = np.frombuffer(take(n_fast * n_chirps * 8), dtype="<c8").reshape(n_fast, n_chirps)
    (spo2_len,) = struct.unpack("<Q", take(8))
    spo2 = np.frombuffer(take(spo2_len), dtype=np.uint8).copy()
    (text_len,) = struct.unpack("<I", take(4))
    text = take(text_len).decode()
    epoch_len = 30.0
    events: list[AnnotatedEvent] = []
    stages: list[SleepStage] = []
    for line in text.splitlines():
        tokens = line.split()
        if not tokens:
            continue
        if tokens[0] == "epoch_len":
            epoch_len = float(tokens[1])
        elif tokens[0] == "event":
            events.append(AnnotatedEvent(EventKind(tokens[1]), float(tokens[2]),
                                         float(tokens[3])))
        elif tokens[0] == "stage":
            stages.append(SleepStage[tokens[2]])
    return SubjectRecord(
        subject_id=sid, config=cfg,
        beat=BeatSignalCube(values=beat.copy(), config=cfg),
        spo2=SpO2Trace(samples=spo2),
        truth_events=events,
        truth_hypnogram=Hypnogram(stages, epoch_len),
    )


def save_cohort(dirpath: str | Path, records: list[SubjectRecord]):
    dirpath = Path(dirpath)
    dirpath.mkdir(parents=True, exist_ok=True)
    for record in records:
        save_record(dirpath / f"{record.subject_id}.rosac", record)


def load_cohort(dirpath: str | Path) -> list[SubjectRecord]:
    paths = sorted(Path(dirpath).glob("*.rosac"))
    if not paths:
        raise ContainerError(f"no cohort containers under {dirpath}")
    return [load_record(p) for p in paths]
