"""Single-file parameter checkpoints.

Layout::

    b"CSCK"  | uint32 version | uint64 header length | JSON header | raw data

The JSON header holds free-form ``meta`` plus one manifest entry per tensor
(name, dtype, shape, offset, nbytes); offsets are relative to the start of the
raw block.  All values are stored little-endian, so a write/read cycle is
bit-exact.
"""

from __future__ import annotations

import json
import os
import struct
from pathlib import Path

import numpy as np

from ..errors import InputError

MAGIC = b"CSCK"
VERSION = 1


def save_checkpoint(path: str | os.PathLike, tensors: dict[str, np.ndarray], meta: dict | None = None) -> None:
    entries = []
    blobs = []
    offset = 0
    for name, arr in tensors.items():
        arr = np.asarray(arr)
        le = arr.astype(arr.dtype.newbyteorder("<"), copy=False)
        raw = np.ascontiguousarray(le).tobytes()
        entries.append({"name": name, "dtype": le.dtype.str, "shape": list(arr.shape),
                        "offset": offset, "nbytes": len(raw)})
        blobs.append(raw)
        offset += len(raw)
    header = json.dumps({"meta": meta or {}, "tensors": entries}, sort_keys=True).encode("utf-8")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IQ", VERSION, len(header)))
        fh.write(header)
        for raw in blobs:
            fh.write(raw)
    os.replace(tmp, path)


def load_checkpoint(path: str | os.PathLike) -> tuple[dict[str, np.ndarray], dict]:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != MAGIC:
        raise InputError(f"{path}: not a checkpoint file")
    version, hlen = struct.unpack("<IQ", blob[4:16])
    if version != VERSION:
        raise InputError(f"{path}: unsupported checkpoint version {version}")
    header = json.loads(blob[16:16 + hlen].decode("utf-8"))
    base = 16 + hlen
    tensors = {}
    for e in header["tensors"]:
        start = base + e["offset"]
        arr = np.frombuffer(blob, dtype=np.dtype(e["dtype"]), count=int(np.prod(e["shape"], dtype=np.int64)),
                            offset=start)
        tensors[e["name"]] = arr.reshape(e["shape"]).astype(np.dtype(e["dtype"]).newbyteorder("="))
    return tensors, header["meta"]


def read_manifest(path: str | os.PathLike) -> list[dict]:
    with open(path, "rb") as fh:
        head = fh.read(16)
        _, hlen = struct.unpack("<IQ", head[4:16])
        return json.loads(fh.read(hlen).decode("utf-8"))["tensors"]
