"""Model checkpoint container.

Layout: 8-byte magic ``RFSNCKPT``, little-endian uint32 version, uint32 header
length, UTF-8 JSON header, then the tensors back to back as little-endian
float32. The header holds free-form ``meta`` and a ``tensors`` list of
``{name, shape, offset}`` (byte offsets relative to the end of the header).
"""
from __future__ import annotations

import json
import struct

import numpy as np

from ..errors import InputError

MAGIC = b"RFSNCKPT"
VERSION = 1
_F32 = np.dtype("<f4")


def save_checkpoint(path, tensors: dict, meta: dict | None = None) -> None:
    entries = []
    blobs = []
    offset = 0
    for name in tensors:
        arr = np.ascontiguousarray(tensors[name], dtype=_F32)
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset})
        b = arr.tobytes()
        blobs.append(b)
        offset += len(b)
    header = json.dumps({"meta": meta or {}, "tensors": entries}, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(header)))
        fh.write(header)
        for b in blobs:
            fh.write(b)


def load_checkpoint(path) -> tuple:
    """Returns ``(tensors, meta)``; tensors come back as float32 arrays."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:8] != MAGIC:
        raise InputError(f"{path}: not a checkpoint file")
    version, hlen = struct.unpack("<II", data[8:16])
    if version != VERSION:
        raise InputError(f"{path}: unsupported checkpoint version {version}")
    header = json.loads(data[16 : 16 + hlen].decode("utf-8"))
    base = 16 + hlen
    tensors = {}
    for e in header["tensors"]:
        count = int(np.prod(e["shape"])) if e["shape"] else 1
        start = base + e["offset"]
        arr = np.frombuffer(data, dtype=_F32, count=count, offset=start).reshape(e["shape"])
        tensors[e["name"]] = arr.astype(np.float32)
    return tensors, header["meta"]
