"""BVH construction and nearest-hit ray traversal (numba kernels)."""
from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

LEAF_SIZE = 4
_EPS = 1e-12


@dataclass(frozen=True, eq=False)
class BVH:
    # flattened nodes; a leaf has count > 0 and covers order[start:start + count]
    lo: np.ndarray
    hi: np.ndarray
    left: np.ndarray
    right: np.ndarray
    start: np.ndarray
    count: np.ndarray
    order: np.ndarray


def build_bvh(v0: np.ndarray, v1: np.ndarray, v2: np.ndarray) -> BVH:
    """Median-split BVH over triangle centroids. Deterministic (stable sorts)."""
    n = len(v0)
    tri_lo = np.minimum(np.minimum(v0, v1), v2)
    tri_hi = np.maximum(np.maximum(v0, v1), v2)
    centroid = (v0 + v1 + v2) / 3.0
    order = np.arange(n, dtype=np.int64)

    lo, hi, left, right, start, count = [], [], [], [], [], []

    def new_node():
        lo.append(np.zeros(3))
        hi.append(np.zeros(3))
        left.append(-1)
        right.append(-1)
        start.append(0)
        count.append(0)
        return len(lo) - 1

    if n == 0:
        node = new_node()
        lo[node] = np.full(3, np.inf)
        hi[node] = np.full(3, -np.inf)
        return BVH(*(np.asarray(a) for a in (lo, hi, left, right, start, count)), order)

    stack = [(new_node(), 0, n)]
    while stack:
        node, s, e = stack.pop()
        idx = order[s:e]
        lo[node] = tri_lo[idx].min(axis=0)
        hi[node] = tri_hi[idx].max(axis=0)
        if e - s <= LEAF_SIZE:
            start[node], count[node] = s, e - s
            continue
        c = centroid[idx]
        axis = int(np.argmax(c.max(axis=0) - c.min(axis=0)))
        order[s:e] = idx[np.argsort(c[:, axis], kind="stable")]
        mid = (s + e) // 2
        a, b = new_node(), new_node()
        left[node], right[node] = a, b
        stack.append((b, mid, e))
        stack.append((a, s, mid))

    return BVH(
        np.asarray(lo, dtype=np.float64),
        np.asarray(hi, dtype=np.float64),
        np.asarray(left, dtype=np.int64),
        np.asarray(right, dtype=np.int64),
        np.asarray(start, dtype=np.int64),
        np.asarray(count, dtype=np.int64),
        order,
    )


@numba.njit(cache=True)
def _slab(o, inv, lo, hi, tmax):
    t0 = 0.0
    t1 = tmax
    for k in range(3):
        a = (lo[k] - o[k]) * inv[k]
        b = (hi[k] - o[k]) * inv[k]
        if a > b:
            a, b = b, a
        if a > t0:
            t0 = a
        if b < t1:
            t1 = b
        if t0 > t1:
            return False
    return True


@numba.njit(cache=True)
def _trace(origin, dirs, v0, v1, v2, lo, hi, left, right, start, count, order, t_out, id_out):
    n = dirs.shape[0]
    stack = np.empty(128, dtype=np.int64)
    inv = np.empty(3)
    for r in range(n):
        d = dirs[r]
        for k in range(3):
            inv[k] = 1.0 / d[k] if d[k] != 0.0 else 1e300
        best = t_out[r]
        best_id = id_out[r]
        sp = 0
        stack[0] = 0
        sp = 1
        while sp > 0:
            sp -= 1
            node = stack[sp]
            if not _slab(origin, inv, lo[node], hi[node], best):
                continue
            if count[node] > 0:
                for q in range(start[node], start[node] + count[node]):
                    tri = order[q]
                    # Moller-Trumbore
                    e1x = v1[tri, 0] - v0[tri, 0]
                    e1y = v1[tri, 1] - v0[tri, 1]
                    e1z = v1[tri, 2] - v0[tri, 2]
                    e2x = v2[tri, 0] - v0[tri, 0]
                    e2y = v2[tri, 1] - v0[tri, 1]
                    e2z = v2[tri, 2] - v0[tri, 2]
                    px = d[1] * e2z - d[2] * e2y
                    py = d[2] * e2x - d[0] * e2z
                    pz = d[0] * e2y - d[1] * e2x
                    det = e1x * px + e1y * py + e1z * pz
                    if abs(det) < 1e-18:
                        continue
                    idet = 1.0 / det
                    sx = origin[0] - v0[tri, 0]
                    sy = origin[1] - v0[tri, 1]
                    sz = origin[2] - v0[tri, 2]
                    u = (sx * px + sy * py + sz * pz) * idet
                    if u < -_EPS or u > 1.0 + _EPS:
                        continue
                    qx = sy * e1z - sz * e1y
                    qy = sz * e1x - sx * e1z
                    qz = sx * e1y - sy * e1x
                    v = (d[0] * qx + d[1] * qy + d[2] * qz) * idet
                    if v < -_EPS or u + v > 1.0 + _EPS:
                        continue
                    t = (e2x * qx + e2y * qy + e2z * qz) * idet
                    if t <= 0.0:
                        continue
                    # ties resolve to the lowest triangle id so results are order-free
                    if t < best or (t == best and tri < best_id):
                        best = t
                        best_id = tri
            else:
                stack[sp] = right[node]
                stack[sp + 1] = left[node]
                sp += 2
        t_out[r] = best
        id_out[r] = best_id


def trace(origin: np.ndarray, dirs: np.ndarray, v0, v1, v2, bvh: BVH, t_out: np.ndarray, id_out: np.ndarray) -> None:
    """Nearest hit along origin + t * dirs; updates t_out/id_out in place where closer."""
    _trace(
        np.ascontiguousarray(origin, dtype=np.float64),
        np.ascontiguousarray(dirs, dtype=np.float64),
        v0, v1, v2,
        bvh.lo, bvh.hi, bvh.left, bvh.right, bvh.start, bvh.count, bvh.order,
        t_out, id_out,
    )
