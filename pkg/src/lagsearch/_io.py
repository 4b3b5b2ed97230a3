"""Small binary/atomic-write helpers shared by the file formats."""

from __future__ import annotations

import os
import struct
import tempfile
from pathlib import Path

from .errors import DataError


def write_atomic(path, data: bytes | str) -> None:
    """Write via a temp file in the target directory, then rename over ``path``."""
    path = Path(path)
    if isinstance(data, str):
        data = data.encode("utf-8")
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def pack_str(s: str) -> bytes:
    raw = s.encode("utf-8")
    if len(raw) > 0xFFFF:
        raise DataError(f"identifier too long to store: {s[:20]}...")
    return struct.pack("<H", len(raw)) + raw


class Reader:
    """Cursor over a bytes buffer with truncation checks."""

    def __init__(self, data: bytes, what: str):
        self.data = data
        self.pos = 0
        self.what = what

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise DataError(f"truncated {self.what} file at byte {self.pos}")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        size = struct.calcsize(fmt)
        return struct.unpack(fmt, self.take(size))

    def u8(self) -> int:
        return self.unpack("<B")[0]

    def u16(self) -> int:
        return self.unpack("<H")[0]

    def u32(self) -> int:
        return self.unpack("<I")[0]

    def string(self) -> str:
        return self.take(self.u16()).decode("utf-8")

    def magic(self, expected: bytes) -> None:
        got = self.take(len(expected))
        if got != expected:
            raise DataError(f"not a {self.what} file (magic {got!r})")

    def at_end(self) -> bool:
        return self.pos == len(self.data)
