"""Versioned, little-endian parameter container.

Layout::

    8 bytes   magic b"GRNETCK\\0"
    4 bytes   format version, uint32 little-endian
    8 bytes   header length N, uint64 little-endian
    N bytes   UTF-8 JSON header: {"meta": {...}, "tensors": [{name, dtype, shape, offset, nbytes}]}
    ...       raw tensor bytes, little-endian, C order, concatenated in header order

The writer is deterministic: equal contents give byte-identical files.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import CheckpointMismatchError

MAGIC = b"GRNETCK\0"
FORMAT_VERSION = 1
_DTYPES = {"f4": "<f4", "f8": "<f8", "i8": "<i8", "i4": "<i4", "u1": "|u1", "b1": "|b1"}


@dataclass
class Checkpoint:
    params: dict
    model_config: dict
    train_config: dict = field(default_factory=dict)
    seed: int = 0
    loss_log: list = field(default_factory=list)
    step: int = 0

    def meta(self) -> dict:
        return {
            "model_config": self.model_config,
            "train_config": self.train_config,
            "seed": self.seed,
            "loss_log": self.loss_log,
            "step": self.step,
        }

    def save(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(dumps(self.params, self.meta()))
        return path

    @classmethod
    def load(cls, path) -> "Checkpoint":
        params, meta = loads(Path(path).read_bytes())
        return cls(params=params, **meta)

    def equals(self, other: "Checkpoint") -> bool:
        if self.meta() != other.meta() or self.params.keys() != other.params.keys():
            return False
        return all(np.array_equal(self.params[k], other.params[k]) for k in self.params)


def dumps(arrays: dict, meta: dict) -> bytes:
    entries, blobs, offset = [], [], 0
    for name in sorted(arrays):
        a = np.asarray(arrays[name])
        code = a.dtype.kind + str(a.dtype.itemsize)
        if code not in _DTYPES:
            raise TypeError(f"unsupported dtype {a.dtype} for {name}")
        raw = np.ascontiguousarray(a, dtype=np.dtype(_DTYPES[code])).tobytes()
        entries.append({"name": name, "dtype": code, "shape": list(a.shape),
                        "offset": offset, "nbytes": len(raw)})
        blobs.append(raw)
        offset += len(raw)
    header = json.dumps({"meta": meta, "tensors": entries}, sort_keys=True).encode()
    return MAGIC + struct.pack("<IQ", FORMAT_VERSION, len(header)) + header + b"".join(blobs)


def loads(buf: bytes):
    if buf[:8] != MAGIC:
        raise CheckpointMismatchError("not a checkpoint file (bad magic)")
    version, hlen = struct.unpack_from("<IQ", buf, 8)
    if version != FORMAT_VERSION:
        raise CheckpointMismatchError(f"unsupported checkpoint version {version}")
    start = 8 + 12
    header = json.loads(buf[start:start + hlen].decode())
    body = memoryview(buf)[start + hlen:]
    arrays = {}
    for e in header["tensors"]:
        chunk = body[e["offset"]:e["offset"] + e["nbytes"]]
        a = np.frombuffer(chunk, dtype=np.dtype(_DTYPES[e["dtype"]])).reshape(e["shape"])
        arrays[e["name"]] = a.astype(a.dtype.newbyteorder("="), copy=True)
    return arrays, header["meta"]
