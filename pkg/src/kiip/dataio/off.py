"""OFF mesh reader (the ModelNet format)."""
from __future__ import annotations

import re
from pathlib import Path

import numpy as np

from ..errors import BadHeader, CountMismatch, FormatError, IndexOutOfRange
from ..pipeline import CropBox
from ..sensor import TriangleMesh
from ._text import as_bytes, lines_with_offsets

_HEADER = re.compile(r"^\s*OFF(.*)$")


def _content_lines(data: bytes):
    for lineno, offset, line in lines_with_offsets(data):
        body = line.split("#", 1)[0].strip()
        if body:
            yield lineno, offset, body.split()


def parse_off(text, path=None) -> TriangleMesh:
    """Parse OFF text. Polygons are fan-triangulated (0, k, k+1), keeping winding."""
    lines = _content_lines(as_bytes(text))
    first = next(lines, None)
    if first is None:
        raise BadHeader("empty file, expected 'OFF'", line=1, offset=0, path=path)
    lineno, offset, toks = first
    m = _HEADER.match(" ".join(toks))
    if m is None:
        raise BadHeader(f"expected 'OFF', got {toks[0]!r}", line=lineno, offset=offset, path=path)
    # counts may follow on the same line, even glued to the keyword ("OFF490 518 0")
    rest = m.group(1).split()
    if not rest:
        nxt = next(lines, None)
        if nxt is None:
            raise CountMismatch("missing vertex/face counts", line=lineno + 1, offset=None, path=path)
        lineno, offset, rest = nxt
    try:
        counts = [int(t) for t in rest[:3]]
    except ValueError:
        raise BadHeader(f"bad counts {' '.join(rest)!r}", line=lineno, offset=offset, path=path) from None
    if len(counts) < 2 or any(c < 0 for c in counts):
        raise BadHeader(f"bad counts {' '.join(rest)!r}", line=lineno, offset=offset, path=path)
    nv, nf = counts[0], counts[1]

    verts = np.empty((nv, 3))
    for i in range(nv):
        item = next(lines, None)
        if item is None:
            raise CountMismatch(f"file ends after {i} of {nv} vertices", line=lineno + 1, path=path)
        lineno, offset, toks = item
        if len(toks) < 3:
            raise FormatError(f"vertex needs 3 coordinates, got {len(toks)}", line=lineno, offset=offset, path=path)
        try:
            verts[i] = [float(t) for t in toks[:3]]
        except ValueError:
            raise FormatError(f"bad vertex {' '.join(toks)!r}", line=lineno, offset=offset, path=path) from None
        if not np.all(np.isfinite(verts[i])):
            raise FormatError("non-finite vertex coordinate", line=lineno, offset=offset, path=path)

    faces = []
    for i in range(nf):
        item = next(lines, None)
        if item is None:
            raise CountMismatch(f"file ends after {i} of {nf} faces", line=lineno + 1, path=path)
        lineno, offset, toks = item
        try:
            n = int(toks[0])
            idx = [int(t) for t in toks[1 : 1 + n]]
        except ValueError:
            raise FormatError(f"bad face {' '.join(toks)!r}", line=lineno, offset=offset, path=path) from None
        if n < 3 or len(idx) != n:
            raise FormatError(f"face declares {n} vertices, has {len(idx)} (need >= 3)", line=lineno, offset=offset, path=path)
        for j in idx:
            if j < 0 or j >= nv:
                raise IndexOutOfRange(f"face index {j} out of range for {nv} vertices", line=lineno, offset=offset, path=path)
        faces.extend((idx[0], idx[k], idx[k + 1]) for k in range(1, n - 1))

    extra = next(lines, None)
    if extra is not None:
        raise CountMismatch("unexpected data after the declared faces", line=extra[0], offset=extra[1], path=path)
    return TriangleMesh(verts, np.array(faces, dtype=np.int64).reshape(-1, 3))


def read_off(path) -> TriangleMesh:
    return parse_off(Path(path).read_bytes(), path=path)


def format_off(mesh: TriangleMesh) -> str:
    out = ["OFF", f"{len(mesh.vertices)} {len(mesh.faces)} 0"]
    out += [" ".join(repr(float(c)) for c in v) for v in mesh.vertices]
    out += ["3 " + " ".join(str(int(i)) for i in f) for f in mesh.faces]
    return "\n".join(out) + "\n"


def normalize_to_box(mesh: TriangleMesh, box: CropBox | None = None, margin: float = 0.1) -> TriangleMesh:
    """Center the mesh in the box and scale it uniformly so its bounding box leaves
    ``margin`` (a fraction of the box edge) free on every side. ModelNet units are arbitrary."""
    box = box or CropBox()
    if len(mesh.vertices) == 0:
        return mesh
    lo, hi = mesh.bounds()
    extent = float(np.max(hi - lo))
    if extent <= 0:
        raise ValueError("mesh has zero extent")
    scale = (1.0 - 2.0 * margin) * float(np.min(box.size)) / extent
    v = (mesh.vertices - (lo + hi) / 2.0) * scale + box.center
    return TriangleMesh(v, mesh.faces)
