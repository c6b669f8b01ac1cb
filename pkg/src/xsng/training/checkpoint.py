"""Binary checkpoint container.

Layout, all integers little-endian:

    magic "XSNG" | version u16 | entry_count u32
    entries: name_len u16, name utf-8, dtype u8 (0 = float64),
             rank u8, dims u32 each, offset u64 into the data section
    data:    raw little-endian float64, entries packed back to back
    meta:    length u32, canonical JSON (sorted keys, no whitespace)

Offsets are required to be exactly sequential, so there is one byte
string per checkpoint state and save -> load -> save reproduces the
file bit for bit.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import FormatError

MAGIC = b"XSNG"
VERSION = 1
_DTYPE_F64 = 0


@dataclass
class CheckpointState:
    tensors: dict = field(default_factory=dict)  # name -> float64 ndarray
    meta: dict = field(default_factory=dict)     # JSON-safe payload


def checkpoint_bytes(state: CheckpointState) -> bytes:
    entries = bytearray()
    data = bytearray()
    for name, value in state.tensors.items():
        # asarray, not ascontiguousarray: the latter promotes rank 0 to
        # rank 1, and tobytes() already serializes in C order.
        arr = np.asarray(value, dtype="<f8")
        encoded = name.encode("utf-8")
        if not encoded or len(encoded) > 0xFFFF:
            raise FormatError(f"tensor name {name!r} not storable")
        if arr.ndim > 0xFF or any(d > 0xFFFFFFFF for d in arr.shape):
            raise FormatError(f"tensor {name!r} too large for the format")
        entries += struct.pack("<H", len(encoded)) + encoded
        entries += struct.pack("<BB", _DTYPE_F64, arr.ndim)
        for d in arr.shape:
            entries += struct.pack("<I", d)
        entries += struct.pack("<Q", len(data))
        data += arr.tobytes()
    meta = json.dumps(state.meta, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return (MAGIC + struct.pack("<HI", VERSION, len(state.tensors))
            + bytes(entries) + bytes(data)
            + struct.pack("<I", len(meta)) + meta)


def save_checkpoint(state: CheckpointState, path) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(checkpoint_bytes(state))
    tmp.replace(path)


def _take(blob: bytes, pos: int, n: int, what: str) -> tuple[bytes, int]:
    if pos + n > len(blob):
        raise FormatError(f"truncated checkpoint: ran out of bytes reading {what}")
    return blob[pos:pos + n], pos + n


def load_checkpoint(path) -> CheckpointState:
    blob = Path(path).read_bytes()
    raw, pos = _take(blob, 0, 4, "magic")
    if raw != MAGIC:
        raise FormatError(f"not a checkpoint file: bad magic {raw!r}")
    raw, pos = _take(blob, pos, 6, "header")
    version, count = struct.unpack("<HI", raw)
    if version != VERSION:
        raise FormatError(f"unsupported checkpoint version {version}")

    specs = []
    expected_offset = 0
    for i in range(count):
        raw, pos = _take(blob, pos, 2, f"entry {i} name length")
        (name_len,) = struct.unpack("<H", raw)
        raw, pos = _take(blob, pos, name_len, f"entry {i} name")
        name = raw.decode("utf-8")
        raw, pos = _take(blob, pos, 2, f"entry {i} dtype/rank")
        dtype, rank = struct.unpack("<BB", raw)
        if dtype != _DTYPE_F64:
            raise FormatError(f"entry {name!r}: unknown dtype code {dtype}")
        raw, pos = _take(blob, pos, 4 * rank, f"entry {i} dims")
        dims = struct.unpack(f"<{rank}I", raw) if rank else ()
        raw, pos = _take(blob, pos, 8, f"entry {i} offset")
        (offset,) = struct.unpack("<Q", raw)
        if offset != expected_offset:
            raise FormatError(f"entry {name!r}: offset {offset} is not sequential")
        size = 8 * int(np.prod(dims, dtype=np.int64)) if rank else 8
        expected_offset += size
        specs.append((name, dims, offset, size))

    data_start = pos
    raw, pos = _take(blob, pos, expected_offset, "tensor data")
    raw, pos = _take(blob, pos, 4, "metadata length")
    (meta_len,) = struct.unpack("<I", raw)
    raw, pos = _take(blob, pos, meta_len, "metadata")
    if pos != len(blob):
        raise FormatError(f"{len(blob) - pos} trailing byte(s) after metadata")
    try:
        meta = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"metadata is not valid JSON: {exc}") from None

    tensors = {}
    for name, dims, offset, size in specs:
        if name in tensors:
            raise FormatError(f"duplicate tensor name {name!r}")
        flat = np.frombuffer(blob, dtype="<f8", count=size // 8,
                             offset=data_start + offset)
        tensors[name] = flat.reshape(dims).astype(np.float64)
    return CheckpointState(tensors=tensors, meta=meta)
