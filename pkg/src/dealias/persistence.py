"""Versioned binary checkpoint format (``DLCK``).

Layout, all integers little-endian::

    b"DLCK"  u16 version
    u32 metadata length, metadata as canonical UTF-8 JSON
    u32 array count, then per array:
        u16 name length, UTF-8 name, u8 dtype code, u8 ndim, u32 dims..., payload
    u32 CRC32 of every preceding byte

Arrays are written in sorted-name order and metadata with sorted keys, so
serialising a loaded checkpoint reproduces the input bytes.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from dealias.errors import CorruptionError, FormatError, InvalidArgument

MAGIC = b"DLCK"
VERSION = 1
SUPPORTED_VERSIONS = (VERSION,)

_DTYPES = {0: "<f4", 1: "<f8", 2: "<i8", 3: "|u1", 4: "<i4", 5: "|b1"}
_CODES = {np.dtype(v): k for k, v in _DTYPES.items()}


@dataclass
class Checkpoint:
    metadata: dict = field(default_factory=dict)
    arrays: dict[str, np.ndarray] = field(default_factory=dict)

    def group(self, prefix: str) -> dict[str, np.ndarray]:
        """Arrays under ``prefix.``, with the prefix stripped."""
        p = prefix + "."
        return {k[len(p):]: v for k, v in self.arrays.items() if k.startswith(p)}


def canonical_json(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False).encode("utf-8")


def to_bytes(ckpt: Checkpoint) -> bytes:
    meta = canonical_json(ckpt.metadata)
    parts = [MAGIC, struct.pack("<HI", VERSION, len(meta)), meta, struct.pack("<I", len(ckpt.arrays))]
    for name in sorted(ckpt.arrays):
        arr = np.asarray(ckpt.arrays[name])
        code = _CODES.get(arr.dtype.newbyteorder("<") if arr.dtype.byteorder == ">" else arr.dtype)
        if code is None:
            raise InvalidArgument(f"array {name!r}: unsupported dtype {arr.dtype}")
        if arr.ndim > 255:
            raise InvalidArgument(f"array {name!r}: too many dimensions")
        encoded = name.encode("utf-8")
        parts.append(struct.pack("<H", len(encoded)) + encoded)
        parts.append(struct.pack(f"<BB{arr.ndim}I", code, arr.ndim, *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype=_DTYPES[code]).tobytes())
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body))


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise CorruptionError(f"checkpoint truncated at byte {self.pos} (needed {n} more)")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def from_bytes(buf: bytes) -> Checkpoint:
    if len(buf) < 6 or buf[:4] != MAGIC:
        raise FormatError("not a DLCK checkpoint (bad magic)")
    (version,) = struct.unpack("<H", buf[4:6])
    if version not in SUPPORTED_VERSIONS:
        raise FormatError(f"unsupported checkpoint version {version}; supported: {list(SUPPORTED_VERSIONS)}")
    if len(buf) < 10:
        raise CorruptionError("checkpoint truncated in header")
    body, (crc,) = buf[:-4], struct.unpack("<I", buf[-4:])
    if zlib.crc32(body) != crc:
        raise CorruptionError("checkpoint checksum mismatch")
    r = _Reader(body)
    r.take(6)
    (meta_len,) = r.unpack("<I")
    try:
        metadata = json.loads(r.take(meta_len).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptionError(f"checkpoint metadata unreadable: {exc}") from exc
    (count,) = r.unpack("<I")
    arrays = {}
    for _ in range(count):
        (name_len,) = r.unpack("<H")
        name = r.take(name_len).decode("utf-8")
        code, ndim = r.unpack("<BB")
        if code not in _DTYPES:
            raise CorruptionError(f"array {name!r}: unknown dtype code {code}")
        dims = r.unpack(f"<{ndim}I")
        dt = np.dtype(_DTYPES[code])
        payload = r.take(int(np.prod(dims, dtype=np.int64)) * dt.itemsize)
        arrays[name] = np.frombuffer(payload, dtype=dt).reshape(dims).astype(dt.newbyteorder("="))
    if r.pos != len(body):
        raise CorruptionError(f"{len(body) - r.pos} trailing bytes after last array")
    return Checkpoint(metadata, arrays)


def save_checkpoint(path: str | Path, ckpt: Checkpoint) -> Path:
    """Write atomically: a partially written file never replaces a good one."""
    path = Path(path)
    data = to_bytes(ckpt)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise
    return path


def load_checkpoint(path: str | Path) -> Checkpoint:
    return from_bytes(Path(path).read_bytes())
