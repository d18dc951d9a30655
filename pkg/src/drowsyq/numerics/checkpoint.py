"""Checkpoint files: ``<stem>.json`` manifest plus ``<stem>.f64le`` blob.

The manifest lists every array's name, shape and byte offset into the blob;
arrays are stored row-major as little-endian float64, so a save/load round
trip is bit-exact.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Dict, Tuple

import numpy as np

FORMAT = "drowsyq-checkpoint/1"


def _paths(path) -> Tuple[Path, Path]:
    p = Path(path)
    if p.suffix in (".json", ".f64le"):
        p = p.with_suffix("")
    return p.with_suffix(".json"), p.with_suffix(".f64le")


def save_arrays(path, arrays: Dict[str, np.ndarray], meta: dict | None = None) -> Path:
    manifest_path, blob_path = _paths(path)
    manifest_path.parent.mkdir(parents=True, exist_ok=True)
    entries = []
    offset = 0
    with open(blob_path, "wb") as fh:
        for name, arr in arrays.items():
            a = np.asarray(arr, dtype="<f8")
            fh.write(a.tobytes(order="C"))
            entries.append({"name": name, "shape": list(a.shape), "offset": offset})
            offset += a.nbytes
    manifest = {"format": FORMAT, "blob": blob_path.name, "nbytes": offset, "params": entries, "meta": meta or {}}
    manifest_path.write_text(json.dumps(manifest, indent=2))
    return manifest_path


def load_arrays(path) -> Tuple[Dict[str, np.ndarray], dict]:
    manifest_path, _ = _paths(path)
    manifest = json.loads(manifest_path.read_text())
    if manifest.get("format") != FORMAT:
        raise ValueError(f"{manifest_path}: unsupported checkpoint format {manifest.get('format')!r}")
    blob_path = manifest_path.parent / manifest["blob"]
    raw = blob_path.read_bytes()
    if len(raw) != manifest["nbytes"]:
        raise ValueError(f"{blob_path}: expected {manifest['nbytes']} bytes, found {len(raw)}")
    arrays = {}
    for e in manifest["params"]:
        shape = tuple(e["shape"])
        count = int(np.prod(shape)) if shape else 1
        a = np.frombuffer(raw, dtype="<f8", count=count, offset=e["offset"]).reshape(shape)
        arrays[e["name"]] = a.astype(np.float64)
    return arrays, manifest.get("meta", {})
