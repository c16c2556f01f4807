"""Versioned checkpoint container: a text manifest plus raw little-endian
float64 tensor payloads in one file.

Layout: 8-byte magic, little-endian uint64 manifest length, UTF-8 JSON
manifest, then the tensor blobs concatenated in manifest order. The manifest
is serialized with sorted keys so identical contents produce identical bytes.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .kernel import Parameter

MAGIC = b"NTCKPT01"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    """Raised for unreadable or inconsistent checkpoint files."""


def save_checkpoint(path, tensors: Mapping[str, np.ndarray], extra: dict | None = None) -> None:
    entries = []
    blobs = []
    for name in sorted(tensors):
        arr = np.asarray(tensors[name], dtype="<f8")
        entries.append({"name": name, "shape": list(arr.shape)})
        blobs.append(np.ascontiguousarray(arr).tobytes())
    manifest = {
        "version": FORMAT_VERSION,
        "tensors": entries,
        "extra": extra or {},
    }
    payload = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(payload)))
        fh.write(payload)
        for blob in blobs:
            fh.write(blob)


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if len(raw) < len(MAGIC) + 8 or raw[: len(MAGIC)] != MAGIC:
        raise CheckpointError(f"{path} is not a checkpoint file (bad magic)")
    (manifest_len,) = struct.unpack_from("<Q", raw, len(MAGIC))
    start = len(MAGIC) + 8
    try:
        manifest = json.loads(raw[start:start + manifest_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path} has a corrupt manifest: {exc}") from exc
    if manifest.get("version") != FORMAT_VERSION:
        raise CheckpointError(
            f"{path} has unsupported format version {manifest.get('version')!r}"
        )
    tensors: dict[str, np.ndarray] = {}
    offset = start + manifest_len
    for entry in manifest["tensors"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        nbytes = count * 8
        if offset + nbytes > len(raw):
            raise CheckpointError(f"{path} is truncated at tensor {entry['name']!r}")
        arr = np.frombuffer(raw, dtype="<f8", count=count, offset=offset).reshape(shape)
        tensors[entry["name"]] = arr.astype(np.float64)
        offset += nbytes
    return tensors, manifest.get("extra", {})


def params_as_dict(params: Iterable[Parameter]) -> dict[str, np.ndarray]:
    return {p.name: p.data for p in params}


def load_into_params(params: Iterable[Parameter], tensors: Mapping[str, np.ndarray]) -> None:
    for p in params:
        if p.name not in tensors:
            raise CheckpointError(f"checkpoint is missing tensor {p.name!r}")
        arr = tensors[p.name]
        if arr.shape != p.data.shape:
            raise CheckpointError(
                f"tensor {p.name!r} has shape {arr.shape}, expected {p.data.shape}"
            )
        p.data[...] = arr
