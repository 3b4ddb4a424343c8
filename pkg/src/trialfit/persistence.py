"""Binary checkpoint format.

Layout (all integers little-endian)::

    b"FTBC"  u32 version  u64 epoch_counter  u32 section_count
    section*:
        u8 kind  u32 name_len  name (UTF-8)
        kind 1-3: u32 rank  u64 dims[rank]  f64 values[prod(dims)]
        kind 4:   u64 length  bytes[length]

Kinds: 1 model parameter, 2 optimizer scalar, 3 optimizer buffer,
4 callback payload. Sections are written sorted by (kind, name).
"""
from __future__ import annotations

import os
import struct
import tempfile
from dataclasses import dataclass, field
from typing import Dict

import numpy as np

from .errors import CheckpointError

MAGIC = b"FTBC"
VERSION = 1

PARAMETER = 1
OPTIMIZER_SCALAR = 2
OPTIMIZER_BUFFER = 3
CALLBACK_PAYLOAD = 4

_F64 = np.dtype("<f8")


@dataclass
class TrialStateRecord:
    epoch: int = 0
    parameters: Dict[str, np.ndarray] = field(default_factory=dict)
    optimizer_scalars: Dict[str, float] = field(default_factory=dict)
    optimizer_buffers: Dict[str, np.ndarray] = field(default_factory=dict)
    callback_payloads: Dict[str, bytes] = field(default_factory=dict)

    def __eq__(self, other):
        if not isinstance(other, TrialStateRecord):
            return NotImplemented
        return to_bytes(self) == to_bytes(other)


def _array_section(kind: int, name: str, array) -> bytes:
    array = np.asarray(array, dtype=np.float64)
    out = [struct.pack("<B", kind), _name(name), struct.pack("<I", array.ndim)]
    out.append(struct.pack(f"<{array.ndim}Q", *array.shape))
    out.append(np.ascontiguousarray(array, dtype=_F64).tobytes())
    return b"".join(out)


def _name(name: str) -> bytes:
    raw = name.encode("utf-8")
    return struct.pack("<I", len(raw)) + raw


def to_bytes(record: TrialStateRecord) -> bytes:
    sections = []
    for name in sorted(record.parameters):
        sections.append(_array_section(PARAMETER, name, record.parameters[name]))
    for name in sorted(record.optimizer_scalars):
        sections.append(_array_section(OPTIMIZER_SCALAR, name, np.float64(record.optimizer_scalars[name])))
    for name in sorted(record.optimizer_buffers):
        sections.append(_array_section(OPTIMIZER_BUFFER, name, record.optimizer_buffers[name]))
    for name in sorted(record.callback_payloads):
        payload = bytes(record.callback_payloads[name])
        sections.append(struct.pack("<B", CALLBACK_PAYLOAD) + _name(name) + struct.pack("<Q", len(payload)) + payload)
    header = MAGIC + struct.pack("<IQI", VERSION, int(record.epoch), len(sections))
    return header + b"".join(sections)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if n < 0 or self.pos + n > len(self.data):
            raise CheckpointError(f"corrupt at offset {self.pos}")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def from_bytes(data: bytes) -> TrialStateRecord:
    if len(data) < 4 or data[:4] != MAGIC:
        raise CheckpointError("not a checkpoint")
    r = _Reader(data)
    r.take(4)
    (version,) = r.unpack("<I")
    if version > VERSION or version == 0:
        raise CheckpointError(f"unsupported version {version}")
    epoch, count = r.unpack("<QI")
    record = TrialStateRecord(epoch=epoch)
    for _ in range(count):
        start = r.pos
        (kind,) = r.unpack("<B")
        (name_len,) = r.unpack("<I")
        try:
            name = r.take(name_len).decode("utf-8")
        except UnicodeDecodeError:
            raise CheckpointError(f"corrupt at offset {start}") from None
        if kind == CALLBACK_PAYLOAD:
            (length,) = r.unpack("<Q")
            record.callback_payloads[name] = r.take(length)
            continue
        if kind not in (PARAMETER, OPTIMIZER_SCALAR, OPTIMIZER_BUFFER):
            raise CheckpointError(f"unknown section kind {kind} at offset {start}")
        (rank,) = r.unpack("<I")
        dims = r.unpack(f"<{rank}Q")
        n = int(np.prod(dims, dtype=np.uint64)) if rank else 1
        values = np.frombuffer(r.take(8 * n), dtype=_F64).astype(np.float64).reshape(dims)
        if kind == PARAMETER:
            record.parameters[name] = values
        elif kind == OPTIMIZER_BUFFER:
            record.optimizer_buffers[name] = values
        else:
            if rank != 0:
                raise CheckpointError(f"optimizer scalar {name!r} has rank {rank}")
            record.optimizer_scalars[name] = float(values)
    if r.pos != len(data):
        raise CheckpointError(f"corrupt at offset {r.pos}")
    return record


def save(record: TrialStateRecord, path) -> None:
    """Write atomically: a temp file in the target directory is renamed over ``path``."""
    data = to_bytes(record)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(prefix=".ckpt-", dir=directory)
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load(path) -> TrialStateRecord:
    with open(path, "rb") as f:
        return from_bytes(f.read())
