"""ASCII PLY for point clouds and triangle meshes (vertex element first, then face)."""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import FormatError
from ..sensor import OrganizedPointCloud, TriangleMesh
from ._text import as_bytes, atomic_write, tokens_with_offsets

_SCALARS = {"char", "uchar", "short", "ushort", "int", "uint", "float", "double",
            "int8", "uint8", "int16", "uint16", "int32", "uint32", "float32", "float64"}
_INTS = {"char", "uchar", "short", "ushort", "int", "uint", "int8", "uint8", "int16", "uint16", "int32", "uint32"}


@dataclass
class PlyElement:
    name: str
    count: int
    properties: list = field(default_factory=list)  # (name, type) or (name, ("list", count_type, item_type))


@dataclass
class PlyData:
    elements: dict
    comments: list
    data: dict  # element name -> list of rows; list properties are python lists
    row_offsets: dict = field(default_factory=dict)  # element name -> byte offset of each row


def parse_ply(text, path=None) -> PlyData:
    raw = as_bytes(text)
    end = raw.find(b"end_header")
    if not raw.startswith(b"ply"):
        raise FormatError("missing 'ply' magic", offset=0, path=path)
    if end < 0:
        raise FormatError("header is not terminated by 'end_header'", offset=len(raw), path=path)
    body_start = raw.find(b"\n", end)
    body_start = len(raw) if body_start < 0 else body_start + 1

    elements: dict = {}
    order = []
    comments = []
    current = None
    offset = 0
    for line in raw[:end].split(b"\n"):
        text_line = line.decode("ascii", errors="replace").strip()
        toks = text_line.split()
        pos = offset
        offset += len(line) + 1
        if not toks or toks[0] == "ply":
            continue
        key = toks[0]
        if key == "format":
            if len(toks) < 3 or toks[1] != "ascii":
                raise FormatError(f"unsupported format {' '.join(toks[1:])!r} (ASCII only)", offset=pos, path=path)
        elif key in ("comment", "obj_info"):
            comments.append(text_line[len(key):].strip())
        elif key == "element":
            try:
                current = PlyElement(toks[1], int(toks[2]))
            except (IndexError, ValueError):
                raise FormatError(f"bad element line {text_line!r}", offset=pos, path=path) from None
            if current.count < 0:
                raise FormatError("negative element count", offset=pos, path=path)
            elements[current.name] = current
            order.append(current.name)
        elif key == "property":
            if current is None:
                raise FormatError("property before any element", offset=pos, path=path)
            if len(toks) == 5 and toks[1] == "list" and toks[2] in _INTS and toks[3] in _SCALARS:
                current.properties.append((toks[4], ("list", toks[2], toks[3])))
            elif len(toks) == 3 and toks[1] in _SCALARS:
                current.properties.append((toks[2], toks[1]))
            else:
                raise FormatError(f"bad property line {text_line!r}", offset=pos, path=path)
        else:
            raise FormatError(f"unknown header keyword {key!r}", offset=pos, path=path)

    tokens = tokens_with_offsets(raw, body_start)

    def take(what):
        item = next(tokens, None)
        if item is None:
            raise FormatError(f"file truncated while reading {what}", offset=len(raw), path=path)
        return item

    def convert(tok, kind, pos, what):
        try:
            v = int(tok) if kind in _INTS else float(tok)
        except ValueError:
            raise FormatError(f"bad {kind} value {tok!r} in {what}", offset=pos, path=path) from None
        if kind not in _INTS and not np.isfinite(v):
            raise FormatError(f"non-finite value in {what}", offset=pos, path=path)
        return v

    data = {}
    row_offsets = {}
    for name in order:
        el = elements[name]
        rows = []
        offsets = []
        for i in range(el.count):
            row = []
            what = f"{name} {i}"
            offsets.append(None)
            for pname, ptype in el.properties:
                if isinstance(ptype, tuple):
                    pos, tok = take(what)
                    if offsets[-1] is None:
                        offsets[-1] = pos
                    n = convert(tok, ptype[1], pos, what)
                    if n < 0:
                        raise FormatError(f"negative list length in {what}", offset=pos, path=path)
                    items = []
                    for _ in range(n):
                        ipos, itok = take(what)
                        items.append(convert(itok, ptype[2], ipos, what))
                    row.append(items)
                else:
                    pos, tok = take(what)
                    if offsets[-1] is None:
                        offsets[-1] = pos
                    row.append(convert(tok, ptype, pos, what))
            rows.append(row)
        data[name] = rows
        row_offsets[name] = offsets
    extra = next(tokens, None)
    if extra is not None:
        raise FormatError("unexpected data after the declared elements", offset=extra[0], path=path)
    return PlyData(elements, comments, data, row_offsets)


def _column(ply: PlyData, element: str, prop: str):
    names = [p[0] for p in ply.elements[element].properties]
    if prop not in names:
        return None
    k = names.index(prop)
    return [row[k] for row in ply.data[element]]


def _vertices(ply: PlyData, path=None) -> np.ndarray:
    if "vertex" not in ply.elements:
        raise FormatError("no vertex element", offset=0, path=path)
    cols = [_column(ply, "vertex", c) for c in "xyz"]
    if any(c is None for c in cols):
        raise FormatError("vertex element needs x, y, z properties", offset=0, path=path)
    return np.array(cols, dtype=float).T.reshape(-1, 3)


def parse_ply_mesh(text, path=None) -> TriangleMesh:
    ply = parse_ply(text, path)
    verts = _vertices(ply, path)
    faces = []
    if "face" in ply.elements:
        col = _column(ply, "face", "vertex_indices")
        if col is None:
            col = _column(ply, "face", "vertex_index")
        if col is None:
            raise FormatError("face element needs a vertex_indices list", offset=0, path=path)
        for i, idx in enumerate(col):
            pos = ply.row_offsets["face"][i]
            if len(idx) < 3:
                raise FormatError(f"face {i} has {len(idx)} vertices", offset=pos, path=path)
            if min(idx) < 0 or max(idx) >= len(verts):
                raise FormatError(f"face {i} index out of range for {len(verts)} vertices", offset=pos, path=path)
            faces.extend((idx[0], idx[k], idx[k + 1]) for k in range(1, len(idx) - 1))
    return TriangleMesh(verts, np.array(faces, dtype=np.int64).reshape(-1, 3))


def parse_ply_points(text, path=None) -> np.ndarray:
    return _vertices(parse_ply(text, path), path)


def parse_ply_cloud(text, path=None) -> OrganizedPointCloud:
    """Rebuild an organized cloud written by :func:`format_ply_cloud`."""
    ply = parse_ply(text, path)
    meta = {}
    for c in ply.comments:
        for kv in c.split():
            if "=" in kv:
                k, v = kv.split("=", 1)
                meta[k] = v
    try:
        width, height = int(meta["width"]), int(meta["height"])
    except (KeyError, ValueError):
        raise FormatError("organized cloud needs 'width=' and 'height=' in a comment", offset=0, path=path) from None
    pts = _vertices(ply, path)
    rows, cols = _column(ply, "vertex", "row"), _column(ply, "vertex", "col")
    if rows is None or cols is None:
        raise FormatError("organized cloud needs row/col vertex properties", offset=0, path=path)
    rows, cols = np.asarray(rows, dtype=np.int64), np.asarray(cols, dtype=np.int64)
    bad = np.nonzero((rows < 0) | (rows >= height) | (cols < 0) | (cols >= width))[0]
    if len(bad):
        raise FormatError("row/col outside the declared lattice", offset=ply.row_offsets["vertex"][bad[0]], path=path)
    points = np.full((height, width, 3), np.nan)
    valid = np.zeros((height, width), dtype=bool)
    points[rows, cols] = pts
    valid[rows, cols] = True
    return OrganizedPointCloud(points, valid, meta.get("frame_name", "camera"))


def read_ply_mesh(path) -> TriangleMesh:
    return parse_ply_mesh(Path(path).read_bytes(), path)


def read_ply_points(path) -> np.ndarray:
    return parse_ply_points(Path(path).read_bytes(), path)


def read_ply_cloud(path) -> OrganizedPointCloud:
    return parse_ply_cloud(Path(path).read_bytes(), path)


def _num(x) -> str:
    return repr(float(x))


def format_ply_points(points, comments=()) -> str:
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    head = ["ply", "format ascii 1.0", *(f"comment {c}" for c in comments),
            f"element vertex {len(pts)}", "property double x", "property double y", "property double z", "end_header"]
    return "\n".join(head + [" ".join(map(_num, p)) for p in pts]) + "\n"


def format_ply_cloud(cloud: OrganizedPointCloud) -> str:
    """Valid points only, row-major ("valid-packed"), with their lattice indices."""
    rows, cols = np.nonzero(cloud.valid)
    pts = cloud.points[rows, cols]
    head = [
        "ply",
        "format ascii 1.0",
        f"comment frame_name={cloud.frame_name} ordering=valid-packed-row-major width={cloud.width} height={cloud.height}",
        f"element vertex {len(pts)}",
        "property double x",
        "property double y",
        "property double z",
        "property int row",
        "property int col",
        "end_header",
    ]
    body = [f"{_num(p[0])} {_num(p[1])} {_num(p[2])} {r} {c}" for p, r, c in zip(pts, rows, cols)]
    return "\n".join(head + body) + "\n"


def format_ply_mesh(mesh: TriangleMesh) -> str:
    head = ["ply", "format ascii 1.0", f"element vertex {len(mesh.vertices)}",
            "property double x", "property double y", "property double z",
            f"element face {len(mesh.faces)}", "property list uchar int vertex_indices", "end_header"]
    body = [" ".join(map(_num, v)) for v in mesh.vertices]
    body += ["3 " + " ".join(str(int(i)) for i in f) for f in mesh.faces]
    return "\n".join(head + body) + "\n"


def write_ply_cloud(cloud: OrganizedPointCloud, path) -> None:
    atomic_write(path, format_ply_cloud(cloud))


def write_ply_mesh(mesh: TriangleMesh, path) -> None:
    atomic_write(path, format_ply_mesh(mesh))


def write_ply_points(points, path, comments=()) -> None:
    atomic_write(path, format_ply_points(points, comments))
