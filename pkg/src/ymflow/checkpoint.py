"""Binary checkpoints: a magic line, a one-line JSON header, then raw arrays.

Arrays are little-endian float64 written axis-major, component-minor: a form of
shape (ncomp, n1, n2, n3, m) is stored as (n1, n2, n3, ncomp, m); complex gauge
fields (n1, n2, n3, N, N) are stored as real/imaginary pairs in a trailing axis.
The header records every array's stored shape, so readers need no other input.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

__all__ = ["MAGIC", "FORMAT_VERSION", "Checkpoint", "save_checkpoint", "load_checkpoint",
           "CheckpointError"]

MAGIC = b"YMFLOW-CHECKPOINT\n"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    header: dict
    arrays: dict = field(default_factory=dict)


def _to_disk(arr: np.ndarray, kind: str) -> np.ndarray:
    if kind == "form":
        return np.moveaxis(arr, 0, 3)
    if kind == "gauge":
        return np.stack([arr.real, arr.imag], axis=-1)
    return arr


def _from_disk(arr: np.ndarray, kind: str) -> np.ndarray:
    if kind == "form":
        return np.moveaxis(arr, 3, 0)
    if kind == "gauge":
        return arr[..., 0] + 1j * arr[..., 1]
    return arr


def save_checkpoint(path, header: dict, arrays: dict) -> None:
    """Write atomically (temp file + rename).  ``arrays`` maps name -> (array, kind)
    with kind in {"form", "gauge", "raw"}."""
    descr, blobs = [], []
    for name, (arr, kind) in arrays.items():
        disk = np.ascontiguousarray(_to_disk(np.asarray(arr), kind), dtype="<f8")
        descr.append({"name": name, "kind": kind, "shape": list(disk.shape)})
        blobs.append(disk.tobytes())
    head = dict(header, format_version=FORMAT_VERSION, arrays=descr)
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(json.dumps(head, sort_keys=True).encode() + b"\n")
        for b in blobs:
            fh.write(b)
    os.replace(tmp, path)


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as fh:
        if fh.readline() != MAGIC:
            raise CheckpointError(f"{path}: not a checkpoint file")
        head = json.loads(fh.readline())
        if head.get("format_version") != FORMAT_VERSION:
            raise CheckpointError(f"{path}: unsupported format version {head.get('format_version')}")
        arrays = {}
        for d in head["arrays"]:
            count = int(np.prod(d["shape"]))
            raw = fh.read(8 * count)
            if len(raw) != 8 * count:
                raise CheckpointError(f"{path}: truncated array {d['name']!r}")
            disk = np.frombuffer(raw, dtype="<f8").reshape(d["shape"]).astype(float)
            arrays[d["name"]] = _from_disk(disk, d["kind"])
        if fh.read(1):
            raise CheckpointError(f"{path}: trailing bytes after the last array")
    return Checkpoint(head, arrays)
