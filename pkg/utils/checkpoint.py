"""
Checkpoint - JSON manifest plus one raw little-endian blob.

    <dir>/manifest.json   format version, step, tensor directory, extra state
    <dir>/params.bin      tensors back to back in manifest order
"""

import json
import logging
import os
from dataclasses import dataclass, field
from typing import Any, Dict, Optional

import numpy as np

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
MANIFEST = "manifest.json"
BLOB = "params.bin"
_DTYPES = {"<f4": np.float32, "<f8": np.float64, "<i8": np.int64}


class CheckpointError(ValueError):
    """Checkpoint directory is missing, corrupt or inconsistent with its manifest."""


@dataclass
class Checkpoint:
    step: int
    arrays: Dict[str, np.ndarray]
    extra: Dict[str, Any] = field(default_factory=dict)
    path: Optional[str] = None


def _little_endian(array: np.ndarray) -> np.ndarray:
    array = np.asarray(array)
    if array.dtype.kind == "f":
        target = "<f4" if array.dtype.itemsize == 4 else "<f8"
    elif array.dtype.kind in "iu":
        target = "<i8"
    else:
        raise CheckpointError(f"cannot store arrays of dtype {array.dtype}")
    return np.ascontiguousarray(array, dtype=target)


def save_checkpoint(directory: str, step: int, arrays: Dict[str, np.ndarray],
                    extra: Optional[Dict[str, Any]] = None) -> str:
    os.makedirs(directory, exist_ok=True)
    entries = []
    offset = 0
    with open(os.path.join(directory, BLOB), "wb") as fh:
        for name, value in arrays.items():
            data = _little_endian(value)
            fh.write(data.tobytes(order="C"))
            entries.append({"name": name, "dtype": data.dtype.str, "shape": list(data.shape),
                            "offset": offset, "nbytes": int(data.nbytes)})
            offset += int(data.nbytes)
    manifest = {"format_version": FORMAT_VERSION, "step": int(step), "tensors": entries, "extra": extra or {}}
    with open(os.path.join(directory, MANIFEST), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    logger.info(f"[CHECKPOINT] Saved step {step} ({len(entries)} tensors, {offset} bytes) to {directory}")
    return directory


def load_checkpoint(directory: str) -> Checkpoint:
    manifest_path = os.path.join(directory, MANIFEST)
    blob_path = os.path.join(directory, BLOB)
    if not os.path.isfile(manifest_path) or not os.path.isfile(blob_path):
        raise CheckpointError(f"{directory} is not a checkpoint (needs {MANIFEST} and {BLOB})")
    try:
        with open(manifest_path) as fh:
            manifest = json.load(fh)
    except json.JSONDecodeError as e:
        raise CheckpointError(f"corrupt checkpoint manifest {manifest_path}: {e}") from e
    if manifest.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint format version {manifest.get('format_version')}")

    with open(blob_path, "rb") as fh:
        blob = fh.read()
    entries = manifest.get("tensors", [])
    expected = sum(int(e["nbytes"]) for e in entries)
    if len(blob) != expected:
        raise CheckpointError(f"blob holds {len(blob)} bytes, manifest describes {expected}")

    arrays: Dict[str, np.ndarray] = {}
    offset = 0
    for entry in entries:
        dtype = entry.get("dtype")
        if dtype not in _DTYPES:
            raise CheckpointError(f"tensor '{entry.get('name')}' has unsupported dtype {dtype}")
        shape = tuple(int(s) for s in entry["shape"])
        nbytes = int(entry["nbytes"])
        if int(entry["offset"]) != offset or nbytes != int(np.prod(shape, dtype=np.int64)) * np.dtype(dtype).itemsize:
            raise CheckpointError(f"tensor '{entry['name']}' is inconsistent with the blob layout")
        arrays[entry["name"]] = np.frombuffer(blob, dtype=dtype, count=nbytes // np.dtype(dtype).itemsize,
                                              offset=offset).reshape(shape).copy()
        offset += nbytes
    return Checkpoint(step=int(manifest["step"]), arrays=arrays, extra=manifest.get("extra", {}), path=directory)


def checkpoint_name(step: int) -> str:
    return f"step_{step:06d}"


def latest_checkpoint(root: str) -> Optional[str]:
    """Newest step_XXXXXX directory under root, or None."""
    if not os.path.isdir(root):
        return None
    candidates = sorted(d for d in os.listdir(root)
                        if d.startswith("step_") and os.path.isfile(os.path.join(root, d, MANIFEST)))
    return os.path.join(root, candidates[-1]) if candidates else None
