"""KIA1 intermediate array archive.

Layout (all integers little-endian)::

    b"KIA1"  u32 count
    count x { u16 name_len, name (utf-8), u8 dtype, u8 rank,
              u64 dims[rank], payload, u32 crc32(payload) }

dtype tags: 0 = float32, 1 = float64, 2 = uint32. Payloads are C-order
little-endian. Reading is strict: trailing bytes are an error.
"""
from __future__ import annotations

import os
import struct
import zlib
from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import ArchiveError

MAGIC = b"KIA1"
DTYPE_TAGS = {0: np.dtype("<f4"), 1: np.dtype("<f8"), 2: np.dtype("<u4")}
_TAG_OF = {dt: tag for tag, dt in DTYPE_TAGS.items()}


def encode(arrays: Mapping[str, np.ndarray]) -> bytes:
    parts = [MAGIC, struct.pack("<I", len(arrays))]
    for name, arr in arrays.items():
        arr = np.asarray(arr)
        dt = arr.dtype.newbyteorder("<")
        if dt not in _TAG_OF:
            raise ArchiveError(f"array {name!r}: unsupported dtype {arr.dtype}")
        raw_name = name.encode("utf-8")
        if len(raw_name) > 0xFFFF:
            raise ArchiveError(f"array name too long ({len(raw_name)} bytes)")
        if arr.ndim > 0xFF:
            raise ArchiveError(f"array {name!r}: rank {arr.ndim} too large")
        payload = np.ascontiguousarray(arr, dtype=dt).tobytes()
        parts.append(struct.pack("<H", len(raw_name)))
        parts.append(raw_name)
        parts.append(struct.pack("<BB", _TAG_OF[dt], arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        parts.append(payload)
        parts.append(struct.pack("<I", zlib.crc32(payload)))
    return b"".join(parts)


class _Reader:
    def __init__(self, data: bytes):
        self.data = memoryview(data)
        self.pos = 0

    def take(self, n: int, what: str) -> memoryview:
        if self.pos + n > len(self.data):
            raise ArchiveError(f"truncated archive while reading {what} at byte {self.pos}")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def decode(data: bytes) -> dict[str, np.ndarray]:
    rd = _Reader(data)
    if bytes(rd.take(4, "magic")) != MAGIC:
        raise ArchiveError("not a KIA1 archive (magic mismatch)")
    (count,) = rd.unpack("<I", "array count")
    out: dict[str, np.ndarray] = {}
    for i in range(count):
        (name_len,) = rd.unpack("<H", f"name length of array {i}")
        try:
            name = bytes(rd.take(name_len, f"name of array {i}")).decode("utf-8")
        except UnicodeDecodeError:
            raise ArchiveError(f"array {i}: name is not valid UTF-8") from None
        tag, rank = rd.unpack("<BB", f"header of {name!r}")
        if tag not in DTYPE_TAGS:
            raise ArchiveError(f"array {name!r}: unknown dtype tag {tag}")
        dims = rd.unpack(f"<{rank}Q", f"dims of {name!r}")
        dt = DTYPE_TAGS[tag]
        nbytes = int(np.prod(dims, dtype=np.uint64)) * dt.itemsize if rank else dt.itemsize
        payload = bytes(rd.take(nbytes, f"payload of {name!r}"))
        (crc,) = rd.unpack("<I", f"checksum of {name!r}")
        if zlib.crc32(payload) != crc:
            raise ArchiveError(f"array {name!r}: checksum mismatch")
        if name in out:
            raise ArchiveError(f"duplicate array name {name!r}")
        out[name] = np.frombuffer(payload, dtype=dt).reshape(dims).copy()
    if rd.pos != len(rd.data):
        raise ArchiveError(f"{len(rd.data) - rd.pos} trailing bytes after last array")
    return out


def write_intermediate(path: str | os.PathLike, arrays: Mapping[str, np.ndarray]) -> Path:
    path = Path(path)
    path.write_bytes(encode(arrays))
    return path


def read_intermediate(path: str | os.PathLike) -> dict[str, np.ndarray]:
    path = Path(path)
    try:
        data = path.read_bytes()
    except FileNotFoundError:
        raise ArchiveError(f"archive not found: {path}") from None
    try:
        return decode(data)
    except ArchiveError as exc:
        raise ArchiveError(f"{path}: {exc}") from None
