"""Flat binary checkpoints.

Layout::

    b"QPLRNN1\\n"
    uint64 little-endian: byte length of the manifest
    manifest: UTF-8 JSON {"name", "layers", "params", "meta"}
    parameter blocks: little-endian float64, in manifest order
"""
from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Optional, Tuple

import numpy as np

from ..errors import IngestionError
from .layers import Sequential

MAGIC = b"QPLRNN1\n"


def dumps(model: Sequential, meta: Optional[dict] = None) -> bytes:
    params = []
    for i, layer in enumerate(model.layers):
        for p in layer.params():
            params.append({"layer": i, "name": p.name, "shape": list(p.shape)})
    manifest = json.dumps(
        {"name": model.name, "layers": model.manifest(), "params": params, "meta": meta or {}},
        sort_keys=True,
    ).encode()
    blocks = b"".join(np.ascontiguousarray(p.data, dtype="<f8").tobytes() for p in model.params())
    return MAGIC + struct.pack("<Q", len(manifest)) + manifest + blocks


def loads(blob: bytes) -> Tuple[Sequential, dict]:
    if not blob.startswith(MAGIC):
        raise IngestionError("bad magic", field="header")
    offset = len(MAGIC)
    try:
        (length,) = struct.unpack_from("<Q", blob, offset)
        offset += 8
        manifest = json.loads(blob[offset:offset + length].decode())
    except (struct.error, UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise IngestionError(f"unreadable manifest: {exc}", field="manifest") from exc
    offset += length
    model = Sequential.from_manifest(manifest["layers"], manifest.get("name", ""))
    tensors = model.params()
    if len(tensors) != len(manifest["params"]):
        raise IngestionError("parameter count does not match layers", field="params")
    for tensor, entry in zip(tensors, manifest["params"]):
        if list(tensor.shape) != entry["shape"]:
            raise IngestionError(f"shape {entry['shape']} does not match layer", field=entry["name"])
        nbytes = 8 * tensor.size
        if offset + nbytes > len(blob):
            raise IngestionError("truncated parameter block", field=entry["name"])
        tensor.data = np.frombuffer(blob, dtype="<f8", count=tensor.size, offset=offset).astype(np.float64).reshape(tensor.shape)
        offset += nbytes
    if offset != len(blob):
        raise IngestionError("trailing bytes after parameter blocks", field="params")
    return model, manifest.get("meta", {})


def save(model: Sequential, path, meta: Optional[dict] = None) -> None:
    Path(path).write_bytes(dumps(model, meta))


def load(path) -> Tuple[Sequential, dict]:
    return loads(Path(path).read_bytes())
