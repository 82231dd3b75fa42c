"""Procedural watertight meshes. Units are meters."""
from __future__ import annotations

import numpy as np

from .sensor import TriangleMesh


def box(size, center=(0.0, 0.0, 0.0)) -> TriangleMesh:
    sx, sy, sz = np.asarray(size, dtype=float) / 2.0
    c = np.asarray(center, dtype=float)
    v = np.array(
        [[-sx, -sy, -sz], [sx, -sy, -sz], [sx, sy, -sz], [-sx, sy, -sz],
         [-sx, -sy, sz], [sx, -sy, sz], [sx, sy, sz], [-sx, sy, sz]]
    ) + c
    f = np.array(
        [[0, 2, 1], [0, 3, 2], [4, 5, 6], [4, 6, 7], [0, 1, 5], [0, 5, 4],
         [1, 2, 6], [1, 6, 5], [2, 3, 7], [2, 7, 6], [3, 0, 4], [3, 4, 7]]
    )
    return TriangleMesh(v, f)


def icosphere(radius: float, subdivisions: int = 3, center=(0.0, 0.0, 0.0)) -> TriangleMesh:
    t = (1.0 + 5**0.5) / 2.0
    verts = [
        (-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0), (0, -1, t), (0, 1, t),
        (0, -1, -t), (0, 1, -t), (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1),
    ]
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11), (1, 5, 9), (5, 11, 4),
        (11, 10, 2), (10, 7, 6), (7, 1, 8), (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8),
        (3, 8, 9), (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    verts = [np.array(p, dtype=float) / np.linalg.norm(p) for p in verts]
    for _ in range(subdivisions):
        cache: dict = {}

        def mid(a, b):
            key = (min(a, b), max(a, b))
            if key not in cache:
                m = verts[a] + verts[b]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        new = []
        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new
    return TriangleMesh(np.array(verts) * radius + np.asarray(center, dtype=float), np.array(faces))


def lathe(profile, segments: int = 32) -> TriangleMesh:
    """Surface of revolution about z. ``profile`` is a polyline of (radius, z)
    that starts and ends on the axis (radius 0), so the result is closed."""
    profile = [(float(r), float(z)) for r, z in profile]
    ang = np.linspace(0.0, 2.0 * np.pi, segments, endpoint=False)
    cos, sin = np.cos(ang), np.sin(ang)
    verts: list = []
    rings = []
    for r, z in profile:
        if r == 0.0:
            rings.append([len(verts)])
            verts.append((0.0, 0.0, z))
        else:
            rings.append(list(range(len(verts), len(verts) + segments)))
            verts.extend(zip(r * cos, r * sin, np.full(segments, z)))
    faces = []
    for a, b in zip(rings[:-1], rings[1:]):
        for k in range(segments):
            k1 = (k + 1) % segments
            if len(a) == 1 and len(b) == 1:
                continue
            if len(a) == 1:
                faces.append((a[0], b[k1], b[k]))
            elif len(b) == 1:
                faces.append((a[k], a[k1], b[0]))
            else:
                faces.append((a[k], a[k1], b[k1]))
                faces.append((a[k], b[k1], b[k]))
    return TriangleMesh(np.array(verts), np.array(faces))


def cylinder(radius: float, height: float, segments: int = 32) -> TriangleMesh:
    h = height / 2.0
    return lathe([(0, -h), (radius, -h), (radius, h), (0, h)], segments)


def cone(radius: float, height: float, segments: int = 32) -> TriangleMesh:
    h = height / 2.0
    return lathe([(0, -h), (radius, -h), (0, h)], segments)


def cup(bottom_radius: float, top_radius: float, height: float, wall: float = 0.004, segments: int = 32) -> TriangleMesh:
    """Open, thick-walled cup (possibly tapered), centered on its mid-height."""
    h = height / 2.0
    return lathe(
        [
            (0, -h),
            (bottom_radius, -h),
            (top_radius, h),
            (top_radius - wall, h),
            (bottom_radius - wall, -h + wall),
            (0, -h + wall),
        ],
        segments,
    )


def torus(major: float, minor: float, segments: int = 24, tube_segments: int = 12) -> TriangleMesh:
    u = np.linspace(0, 2 * np.pi, segments, endpoint=False)
    v = np.linspace(0, 2 * np.pi, tube_segments, endpoint=False)
    uu, vv = np.meshgrid(u, v, indexing="ij")
    x = (major + minor * np.cos(vv)) * np.cos(uu)
    y = (major + minor * np.cos(vv)) * np.sin(uu)
    z = minor * np.sin(vv)
    verts = np.stack([x, y, z], axis=-1).reshape(-1, 3)
    faces = []
    for i in range(segments):
        for j in range(tube_segments):
            a = i * tube_segments + j
            b = ((i + 1) % segments) * tube_segments + j
            c = ((i + 1) % segments) * tube_segments + (j + 1) % tube_segments
            d = i * tube_segments + (j + 1) % tube_segments
            faces += [(a, b, c), (a, c, d)]
    return TriangleMesh(verts, np.array(faces))


def plane(size: float, center=(0.0, 0.0, 0.0), normal_axis: int = 2) -> TriangleMesh:
    """Square two-triangle patch perpendicular to one coordinate axis."""
    h = size / 2.0
    quad = np.array([[-h, -h], [h, -h], [h, h], [-h, h]])
    v = np.zeros((4, 3))
    others = [k for k in range(3) if k != normal_axis]
    v[:, others[0]] = quad[:, 0]
    v[:, others[1]] = quad[:, 1]
    return TriangleMesh(v + np.asarray(center, dtype=float), np.array([[0, 1, 2], [0, 2, 3]]))
