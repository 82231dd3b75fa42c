"""KVOX count-grid files.

    KVOX 1 30 30 30 <min_x> <min_y> <min_z> <edge>
    <27000 non-negative integers, index order [ix][iy][iz] with iz fastest>
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from ..errors import FormatError
from ..pipeline import RESOLUTION, CropBox, VoxelCountGrid
from ._text import as_bytes, atomic_write, tokens_with_offsets

MAGIC = "KVOX"
VERSION = 1


def format_kvox(grid: VoxelCountGrid) -> str:
    size = grid.crop.size
    if not np.allclose(size, size[0], rtol=0, atol=1e-12):
        raise ValueError("KVOX stores a single edge length; the crop box must be a cube")
    res = grid.resolution
    lo = grid.crop.min_corner
    header = f"{MAGIC} {VERSION} {res} {res} {res} {float(lo[0])!r} {float(lo[1])!r} {float(lo[2])!r} {float(size[0])!r}"
    counts = grid.counts.reshape(-1)
    if counts.min(initial=0) < 0:
        raise ValueError("counts must be non-negative")
    rows = [" ".join(map(str, counts[i : i + res].tolist())) for i in range(0, len(counts), res)]
    return header + "\n" + "\n".join(rows) + "\n"


def parse_kvox(text, path=None) -> VoxelCountGrid:
    raw = as_bytes(text)
    toks = tokens_with_offsets(raw)

    def take(what):
        item = next(toks, None)
        if item is None:
            raise FormatError(f"file truncated, expected {what}", offset=len(raw), path=path)
        return item

    pos, magic = take("magic")
    if magic != MAGIC:
        raise FormatError(f"expected {MAGIC!r}, got {magic!r}", offset=pos, path=path)
    pos, tok = take("version")
    if tok != str(VERSION):
        raise FormatError(f"unsupported version {tok!r}", offset=pos, path=path)
    for axis in "xyz":
        pos, tok = take(f"{axis} dimension")
        if tok != str(RESOLUTION):
            raise FormatError(f"{axis} dimension must be {RESOLUTION}, got {tok!r}", offset=pos, path=path)
    floats = []
    for what in ("min_x", "min_y", "min_z", "edge"):
        pos, tok = take(what)
        try:
            v = float(tok)
        except ValueError:
            raise FormatError(f"bad {what} {tok!r}", offset=pos, path=path) from None
        if not np.isfinite(v):
            raise FormatError(f"non-finite {what}", offset=pos, path=path)
        floats.append(v)
    if floats[3] <= 0:
        raise FormatError("edge must be positive", offset=pos, path=path)

    n = RESOLUTION**3
    counts = np.empty(n, dtype=np.int64)
    for i in range(n):
        pos, tok = take(f"count {i} of {n}")
        if not tok.isdigit():
            raise FormatError(f"count must be a non-negative integer, got {tok!r}", offset=pos, path=path)
        counts[i] = int(tok)
    extra = next(toks, None)
    if extra is not None:
        raise FormatError("unexpected data after the grid", offset=extra[0], path=path)
    lo = np.array(floats[:3])
    return VoxelCountGrid(counts.reshape((RESOLUTION,) * 3), CropBox(lo, lo + floats[3]))


def read_kvox(path) -> VoxelCountGrid:
    return parse_kvox(Path(path).read_bytes(), path)


def write_kvox(grid: VoxelCountGrid, path) -> None:
    atomic_write(path, format_kvox(grid))
