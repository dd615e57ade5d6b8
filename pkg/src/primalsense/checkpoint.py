"""Byte-stable checkpoint container.

Layout::

    b"PSCK" | u32 version | u64 header length | header (UTF-8 JSON) | payloads

The header holds caller metadata (hyperparameters, vocabulary) and one
entry per parameter with its shape and byte offset into the payload area.
Payloads are little-endian float64 in C order. Keys are sorted and JSON is
written compactly, so identical state always yields identical bytes.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Mapping

import numpy as np

MAGIC = b"PSCK"
VERSION = 1


class CheckpointError(ValueError):
    pass


def dumps(params: Mapping[str, np.ndarray], meta: Mapping | None = None) -> bytes:
    entries, blobs, offset = [], [], 0
    for name in sorted(params):
        arr = np.array(params[name], dtype="<f8", order="C")
        if not np.isfinite(arr).all():
            raise CheckpointError(f"parameter {name!r} has non-finite values")
        blob = arr.tobytes(order="C")
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset, "nbytes": len(blob)})
        blobs.append(blob)
        offset += len(blob)
    header = json.dumps({"meta": dict(meta or {}), "params": entries}, sort_keys=True,
                        separators=(",", ":"), ensure_ascii=False).encode("utf-8")
    return MAGIC + struct.pack("<IQ", VERSION, len(header)) + header + b"".join(blobs)


def loads(data: bytes) -> tuple[dict[str, np.ndarray], dict]:
    if data[:4] != MAGIC:
        raise CheckpointError("not a checkpoint (bad magic)")
    version, hlen = struct.unpack_from("<IQ", data, 4)
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    start = 4 + struct.calcsize("<IQ")
    header = json.loads(data[start: start + hlen].decode("utf-8"))
    base = start + hlen
    params = {}
    for e in header["params"]:
        lo = base + e["offset"]
        raw = data[lo: lo + e["nbytes"]]
        if len(raw) != e["nbytes"]:
            raise CheckpointError(f"truncated payload for {e['name']!r}")
        params[e["name"]] = np.frombuffer(raw, dtype="<f8").reshape(e["shape"]).astype(np.float64)
    return params, header["meta"]


def save(path, params: Mapping[str, np.ndarray], meta: Mapping | None = None) -> None:
    Path(path).write_bytes(dumps(params, meta))


def load(path) -> tuple[dict[str, np.ndarray], dict]:
    return loads(Path(path).read_bytes())
