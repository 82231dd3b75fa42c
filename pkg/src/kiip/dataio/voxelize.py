"""Direct mesh voxelization: exact triangle/box overlap for the surface shell,
parity ray casting along x for the interior."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..pipeline import RESOLUTION, CropBox
from ..sensor import TriangleMesh

SURFACE = "surface"
SOLID = "solid"

# offsets keep parity rays off mesh edges that land exactly on voxel-center lines
_RAY_JITTER = np.array([3.14159e-7, 2.71828e-7])


@dataclass(frozen=True, eq=False)
class MeshVoxelization:
    occupied: np.ndarray
    mode: str

    @property
    def n_occupied(self) -> int:
        return int(self.occupied.sum())


def _candidates(lo_idx, hi_idx):
    """All (triangle, ix, iy, iz) with index inside each triangle's clipped index box."""
    extent = np.maximum(hi_idx - lo_idx + 1, 0)
    n = extent.prod(axis=1)
    tri = np.repeat(np.arange(len(n)), n)
    if len(tri) == 0:
        return tri, np.zeros((0, 3), dtype=np.int64)
    start = np.cumsum(n) - n
    local = np.arange(len(tri)) - start[tri]
    ex = extent[tri]
    iz = local % ex[:, 2]
    iy = (local // ex[:, 2]) % ex[:, 1]
    ix = local // (ex[:, 2] * ex[:, 1])
    return tri, lo_idx[tri] + np.stack([ix, iy, iz], axis=1)


def triangle_box_overlap(v0, v1, v2, center, half) -> np.ndarray:
    """Vectorized separating-axis test (13 axes). Boxes are half-open: a triangle that
    only touches a box's max face does not overlap it."""
    a, b, c = v0 - center, v1 - center, v2 - center
    overlap = np.ones(len(a), dtype=bool)
    # box face normals, half-open on the max side
    tmin = np.minimum(np.minimum(a, b), c)
    tmax = np.maximum(np.maximum(a, b), c)
    overlap &= np.all((tmin < half) & (tmax >= -half), axis=1)
    # triangle normal
    n = np.cross(b - a, c - a)
    r = np.sum(half * np.abs(n), axis=1)
    s = np.sum(n * a, axis=1)
    overlap &= np.abs(s) <= r
    # edge x box-axis cross products
    for e in (b - a, c - b, a - c):
        for k in range(3):
            axis = np.zeros_like(e)
            # axis = e x unit_k
            axis[:, (k + 1) % 3] = e[:, (k + 2) % 3]
            axis[:, (k + 2) % 3] = -e[:, (k + 1) % 3]
            pa, pb, pc = (np.sum(axis * v, axis=1) for v in (a, b, c))
            rad = np.sum(half * np.abs(axis), axis=1)
            lo = np.minimum(np.minimum(pa, pb), pc)
            hi = np.maximum(np.maximum(pa, pb), pc)
            overlap &= ~((lo > rad) | (hi < -rad))
    return overlap


def surface_voxels(mesh: TriangleMesh, box: CropBox, resolution: int = RESOLUTION) -> np.ndarray:
    occ = np.zeros((resolution,) * 3, dtype=bool)
    if len(mesh) == 0:
        return occ
    v0, v1, v2 = mesh.triangles()
    step = box.size / resolution
    tlo = np.minimum(np.minimum(v0, v1), v2)
    thi = np.maximum(np.maximum(v0, v1), v2)
    lo_idx = np.clip(np.floor((tlo - box.min_corner) / step).astype(np.int64) - 1, 0, resolution - 1)
    hi_idx = np.clip(np.floor((thi - box.min_corner) / step).astype(np.int64) + 1, 0, resolution - 1)
    outside = np.any((thi < box.min_corner) | (tlo >= box.max_corner), axis=1)
    hi_idx[outside] = lo_idx[outside] - 1
    # chunk so the candidate arrays stay modest for large meshes
    chunk = 4096
    for s in range(0, len(v0), chunk):
        sl = slice(s, s + chunk)
        tri, idx = _candidates(lo_idx[sl], hi_idx[sl])
        if len(tri) == 0:
            continue
        tri = tri + s
        center = box.min_corner + (idx + 0.5) * step
        hit = triangle_box_overlap(v0[tri], v1[tri], v2[tri], center, step / 2.0)
        occ[tuple(idx[hit].T)] = True
    return occ


def interior_voxels(mesh: TriangleMesh, box: CropBox, resolution: int = RESOLUTION) -> np.ndarray:
    """Voxels whose center lies inside the (watertight) mesh, by crossing parity along +x."""
    inside = np.zeros((resolution,) * 3, dtype=bool)
    if len(mesh) == 0:
        return inside
    v0, v1, v2 = mesh.triangles()
    step = box.size / resolution
    ys = box.min_corner[1] + (np.arange(resolution) + 0.5) * step[1] + _RAY_JITTER[0]
    zs = box.min_corner[2] + (np.arange(resolution) + 0.5) * step[2] + _RAY_JITTER[1]
    xs = box.min_corner[0] + (np.arange(resolution) + 0.5) * step[0]
    crossings = [[[] for _ in range(resolution)] for _ in range(resolution)]
    for a, b, c in zip(v0, v1, v2):
        ylo, yhi = min(a[1], b[1], c[1]), max(a[1], b[1], c[1])
        zlo, zhi = min(a[2], b[2], c[2]), max(a[2], b[2], c[2])
        jy = np.nonzero((ys >= ylo) & (ys <= yhi))[0]
        jz = np.nonzero((zs >= zlo) & (zs <= zhi))[0]
        if len(jy) == 0 or len(jz) == 0:
            continue
        py, pz = np.meshgrid(ys[jy], zs[jz], indexing="ij")
        # barycentric coordinates in the yz projection
        d = (b[1] - a[1]) * (c[2] - a[2]) - (c[1] - a[1]) * (b[2] - a[2])
        if abs(d) < 1e-30:
            continue
        w1 = ((py - a[1]) * (c[2] - a[2]) - (c[1] - a[1]) * (pz - a[2])) / d
        w2 = ((b[1] - a[1]) * (pz - a[2]) - (py - a[1]) * (b[2] - a[2])) / d
        w0 = 1.0 - w1 - w2
        hit = (w0 >= 0) & (w1 >= 0) & (w2 >= 0)
        x = w0 * a[0] + w1 * b[0] + w2 * c[0]
        for iy, iz in zip(*np.nonzero(hit)):
            crossings[jy[iy]][jz[iz]].append(x[iy, iz])
    for iy in range(resolution):
        for iz in range(resolution):
            xc = crossings[iy][iz]
            if xc:
                xc = np.sort(np.asarray(xc))
                inside[:, iy, iz] = (np.searchsorted(xc, xs) % 2) == 1
    return inside


def voxelize_mesh(mesh: TriangleMesh, box: CropBox | None = None, mode: str = SURFACE, resolution: int = RESOLUTION) -> MeshVoxelization:
    box = box or CropBox()
    if mode not in (SURFACE, SOLID):
        raise ValueError(f"mode must be {SURFACE!r} or {SOLID!r}")
    occ = surface_voxels(mesh, box, resolution)
    if mode == SOLID:
        occ = occ | interior_voxels(mesh, box, resolution)
    return MeshVoxelization(occ, mode)


def voxelize_parts(parts, box: CropBox | None = None, mode: str = SOLID, resolution: int = RESOLUTION) -> MeshVoxelization:
    """Union of per-part voxelizations; parts may overlap (parity is per part)."""
    occ = np.zeros((resolution,) * 3, dtype=bool)
    for p in parts:
        occ |= voxelize_mesh(p, box, mode, resolution).occupied
    return MeshVoxelization(occ, mode)
