"""Little-endian binary readers/writers shared by all index file formats.

Every on-disk artifact starts with a 4-byte magic followed by a u32 format
version, so a corrupt or foreign file fails fast with a descriptive error
instead of garbage decoding. All integers are little-endian; arrays are raw
numpy buffers with explicit dtypes (``<u4``, ``<f4``, ``<f8``).
"""

from __future__ import annotations

import struct
from typing import BinaryIO

import numpy as np


class StorageError(ValueError):
    """Base error for unreadable index files."""


class BadMagicError(StorageError):
    pass


class VersionMismatchError(StorageError):
    pass


class TruncatedFileError(StorageError):
    pass


class BinaryWriter:
    def __init__(self, fh: BinaryIO):
        self._fh = fh

    def magic(self, tag: bytes, version: int) -> None:
        assert len(tag) == 4
        self._fh.write(tag)
        self.u32(version)

    def u8(self, v: int) -> None:
        self._fh.write(struct.pack("<B", v))

    def u32(self, v: int) -> None:
        self._fh.write(struct.pack("<I", v))

    def i64(self, v: int) -> None:
        self._fh.write(struct.pack("<q", v))

    def u64(self, v: int) -> None:
        self._fh.write(struct.pack("<Q", v))

    def f64(self, v: float) -> None:
        self._fh.write(struct.pack("<d", v))

    def text(self, s: str) -> None:
        raw = s.encode("utf-8")
        self.u32(len(raw))
        self._fh.write(raw)

    def array(self, arr: np.ndarray, dtype: str) -> None:
        self._fh.write(np.ascontiguousarray(arr, dtype=dtype).tobytes())


class BinaryReader:
    def __init__(self, fh: BinaryIO, path: str = "<stream>"):
        self._fh = fh
        self._path = path

    def magic(self, tag: bytes, version: int) -> None:
        got = self._read(4)
        if got != tag:
            raise BadMagicError(f"{self._path}: bad magic {got!r}, expected {tag!r}")
        v = self.u32()
        if v != version:
            raise VersionMismatchError(
                f"{self._path}: format version {v}, this build reads version {version}"
            )

    def _read(self, n: int) -> bytes:
        data = self._fh.read(n)
        if len(data) != n:
            raise TruncatedFileError(
                f"{self._path}: truncated, wanted {n} bytes, got {len(data)}"
            )
        return data

    def u8(self) -> int:
        return struct.unpack("<B", self._read(1))[0]

    def u32(self) -> int:
        return struct.unpack("<I", self._read(4))[0]

    def i64(self) -> int:
        return struct.unpack("<q", self._read(8))[0]

    def u64(self) -> int:
        return struct.unpack("<Q", self._read(8))[0]

    def f64(self) -> float:
        return struct.unpack("<d", self._read(8))[0]

    def text(self) -> str:
        n = self.u32()
        return self._read(n).decode("utf-8")

    def array(self, count: int, dtype: str) -> np.ndarray:
        itemsize = np.dtype(dtype).itemsize
        return np.frombuffer(self._read(count * itemsize), dtype=dtype).copy()
