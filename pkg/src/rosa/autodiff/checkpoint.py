"""Flat f64 parameter checkpoints with a JSON manifest.

Layout: ``<stem>.bin`` holds all parameters concatenated in sorted-name
order as little-endian float64; ``<stem>.json`` lists names, shapes and
byte offsets. Deterministic ordering keeps checkpoints diffable.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .tensor import Tensor


class CheckpointError(RuntimeError):
    pass


def save_checkpoint(path: str | Path, params: dict[str, Tensor | np.ndarray],
                    meta: dict | None = None):
    path = Path(path)
    names = sorted(params)
    manifest = {"version": 1, "meta": meta or {}, "params": []}
    offset = 0
    blobs = []
    for name in names:
        arr = params[name].data if isinstance(params[name], Tensor) else np.asarray(params[name])
        arr = np.ascontiguousarray(arr, dtype="<f8")
        manifest["params"].append({"name": name, "shape": list(arr.shape), "offset": offset})
        blobs.append(arr.tobytes())
        offset += arr.nbytes
    path.with_suffix(".bin").write_bytes(b"".join(blobs))
    path.with_suffix(".json").write_text(json.dumps(manifest, indent=1, sort_keys=True))


def load_checkpoint(path: str | Path) -> tuple[dict[str, np.ndarray], dict]:
    path = Path(path)
    try:
        manifest = json.loads(path.with_suffix(".json").read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"cannot read checkpoint manifest: {exc}") from exc
    if manifest.get("version") != 1:
        raise CheckpointError(f"unsupported checkpoint version {manifest.get('version')}")
    blob = path.with_suffix(".bin").read_bytes()
    out = {}
    for entry in manifest["params"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = entry["offset"]
        arr = np.frombuffer(blob, dtype="<f8", count=count, offset=start).reshape(shape)
        out[entry["name"]] = arr.copy()
    return out, manifest.get("meta", {})


def restore(params: dict[str, Tensor], saved: dict[str, np.ndarray]):
    for name, p in params.items():
        if name not in saved:
            raise CheckpointError(f"missing parameter {name!r} in checkpoint")
        if saved[name].shape != p.data.shape:
            raise CheckpointError(f"shape mismatch for {name!r}")
        p.data = saved[name].astype(np.float64).copy()
