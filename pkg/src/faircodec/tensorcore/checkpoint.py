"""Parameter checkpoint container.

Layout (all integers little-endian)::

    b"FCB1"
    u32   manifest length in bytes
    ...   manifest: UTF-8 JSON, keys sorted
            {"version": 1, "meta": {...},
             "tensors": [{"name", "shape", "offset", "nbytes"}, ...]}
    ...   payload: float32 LE values, tensors in manifest order,
          offsets relative to the payload start
"""
from __future__ import annotations

import io
import json
import struct

import numpy as np

MAGIC = b"FCB1"
VERSION = 1


class CheckpointError(ValueError):
    pass


def dumps_checkpoint(params, meta=None):
    entries = []
    chunks = []
    offset = 0
    for name in sorted(params):
        arr = np.ascontiguousarray(params[name], dtype="<f4")
        raw = arr.tobytes()
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset, "nbytes": len(raw)})
        chunks.append(raw)
        offset += len(raw)
    manifest = json.dumps({"version": VERSION, "meta": meta or {}, "tensors": entries},
                          sort_keys=True, separators=(",", ":")).encode()
    return MAGIC + struct.pack("<I", len(manifest)) + manifest + b"".join(chunks)


def loads_checkpoint(data):
    if data[:4] != MAGIC:
        raise CheckpointError("not a checkpoint (bad magic)")
    if len(data) < 8:
        raise CheckpointError("truncated checkpoint header")
    (mlen,) = struct.unpack_from("<I", data, 4)
    if 8 + mlen > len(data):
        raise CheckpointError("truncated checkpoint manifest")
    try:
        manifest = json.loads(data[8:8 + mlen].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"corrupt manifest: {exc}") from None
    if manifest.get("version") != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {manifest.get('version')}")
    payload = memoryview(data)[8 + mlen:]
    params = {}
    for e in manifest["tensors"]:
        end = e["offset"] + e["nbytes"]
        if end > len(payload):
            raise CheckpointError(f"truncated payload for tensor {e['name']!r}")
        arr = np.frombuffer(payload[e["offset"]:end], dtype="<f4").astype(np.float32)
        params[e["name"]] = arr.reshape(e["shape"])
    return params, manifest["meta"]


def save_checkpoint(path, params, meta=None):
    data = dumps_checkpoint(params, meta)
    if isinstance(path, io.IOBase):
        path.write(data)
    else:
        with open(path, "wb") as fh:
            fh.write(data)
    return data


def load_checkpoint(path):
    with open(path, "rb") as fh:
        return loads_checkpoint(fh.read())
