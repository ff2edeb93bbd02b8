"""Flat binary checkpoint format.

Layout (all integers little-endian u32)::

    b"YNET" | version | len(config) | config (canonical JSON, UTF-8)
    | n_records | records... | crc32 of everything before it

Each record is ``len(name) | name | rank | dims... | float32 payload``.
Learnable parameters and initialised batch-norm running statistics are
stored; the fixed filter bank is rebuilt from code.
"""

from __future__ import annotations

import struct
import zlib
from pathlib import Path

import numpy as np

from .network import NetworkGraph

MAGIC = b"YNET"
VERSION = 1
_U32 = struct.Struct("<I")


class CheckpointError(ValueError):
    pass


class BadMagicError(CheckpointError):
    pass


class VersionError(CheckpointError):
    pass


class TruncatedCheckpointError(CheckpointError):
    pass


class ChecksumError(CheckpointError):
    pass


class CheckpointShapeError(CheckpointError):
    pass


def _records(g: NetworkGraph) -> list[tuple[str, np.ndarray]]:
    out = [(name, p.data) for name, p in g.named_params().items()]
    out += [(name, b) for name, b in g.named_buffers().items() if b is not None]
    return out


def save_checkpoint(g: NetworkGraph) -> bytes:
    config = g.config_text().encode("utf-8")
    records = _records(g)
    parts = [MAGIC, _U32.pack(VERSION), _U32.pack(len(config)), config, _U32.pack(len(records))]
    for name, arr in records:
        raw = name.encode("utf-8")
        parts += [_U32.pack(len(raw)), raw, _U32.pack(arr.ndim)]
        parts += [_U32.pack(d) for d in arr.shape]
        parts.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    body = b"".join(parts)
    return body + _U32.pack(zlib.crc32(body))


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise TruncatedCheckpointError("truncated checkpoint")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return _U32.unpack(self.take(4))[0]


def load_checkpoint(data: bytes) -> NetworkGraph:
    r = _Reader(data)
    if r.take(4) != MAGIC:
        raise BadMagicError("not a checkpoint: bad magic")
    version = r.u32()
    if version != VERSION:
        raise VersionError(f"unsupported checkpoint version {version} (expected {VERSION})")
    config = r.take(r.u32()).decode("utf-8")
    records = {}
    for _ in range(r.u32()):
        name = r.take(r.u32()).decode("utf-8")
        dims = tuple(r.u32() for _ in range(r.u32()))
        count = int(np.prod(dims, dtype=np.int64))
        records[name] = np.frombuffer(r.take(4 * count), dtype="<f4").reshape(dims)
    body_end = r.pos
    (crc,) = _U32.unpack(r.take(4))
    if crc != zlib.crc32(data[:body_end]):
        raise ChecksumError("checkpoint checksum mismatch")
    if r.pos != len(data):
        raise CheckpointError("trailing bytes after checkpoint")

    g = NetworkGraph.from_config_text(config)
    params = g.named_params()
    for name, p in params.items():
        if name not in records:
            raise CheckpointShapeError(f"missing parameter {name}")
        if records[name].shape != p.shape:
            raise CheckpointShapeError(f"{name}: checkpoint shape {records[name].shape} != graph shape {p.shape}")
        p.data[...] = records[name]
    buffers = g.named_buffers()
    for name, arr in records.items():
        if name in params:
            continue
        if name not in buffers:
            raise CheckpointShapeError(f"unknown record {name}")
        layer_name, attr = name.rsplit(".", 1)
        layer = g.layer(layer_name)
        if arr.shape != (layer.channels,):
            raise CheckpointShapeError(f"{name}: checkpoint shape {arr.shape} != ({layer.channels},)")
        setattr(layer, attr, arr.astype(g.dtype))
    return g


def save_checkpoint_file(g: NetworkGraph, path) -> None:
    Path(path).write_bytes(save_checkpoint(g))


def load_checkpoint_file(path) -> NetworkGraph:
    return load_checkpoint(Path(path).read_bytes())
