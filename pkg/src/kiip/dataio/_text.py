"""Small helpers for positioned parsing and atomic writes."""
from __future__ import annotations

import os
import re
import tempfile
from pathlib import Path

_TOKEN = re.compile(rb"\S+")


def as_bytes(data) -> bytes:
    if isinstance(data, bytes):
        return data
    return str(data).encode("utf-8")


def lines_with_offsets(data: bytes):
    """Yield (line number from 1, byte offset of line start, decoded line without newline)."""
    offset = 0
    for lineno, raw in enumerate(data.splitlines(keepends=True), start=1):
        yield lineno, offset, raw.decode("utf-8", errors="replace").rstrip("\r\n")
        offset += len(raw)


def tokens_with_offsets(data: bytes, start: int = 0):
    for m in _TOKEN.finditer(data, start):
        yield m.start(), m.group().decode("ascii", errors="replace")


def atomic_write(path, content) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = as_bytes(content)
    fd, tmp = tempfile.mkstemp(prefix=path.name + ".", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
