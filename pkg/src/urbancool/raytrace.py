"""Triangle ray casting with a bounding-volume hierarchy (numba kernels).

The scene is a set of two-sided triangles plus the analytic ground plane
z = 0.  Rays that miss every triangle and point downward end on the ground;
rays that miss and point upward escape to the sky.
"""
from __future__ import annotations

import math

import numba
import numpy as np

LEAF_SIZE = 4
RAY_EPS = 1e-3


class BVH:
    """Median-split BVH over triangle corners (n, 3, 3)."""

    def __init__(self, corners: np.ndarray):
        corners = np.ascontiguousarray(corners, dtype=np.float64)
        self.corners = corners
        n = len(corners)
        lo_t = corners.min(axis=1) if n else np.zeros((0, 3))
        hi_t = corners.max(axis=1) if n else np.zeros((0, 3))
        cent = corners.mean(axis=1) if n else np.zeros((0, 3))
        order = np.arange(n, dtype=np.int64)
        bmin, bmax, left, right, start, count = [], [], [], [], [], []

        def new_node():
            for lst in (left, right, start, count):
                lst.append(-1)
            bmin.append(np.zeros(3))
            bmax.append(np.zeros(3))
            return len(left) - 1

        if n:
            stack = [(new_node(), 0, n)]
            while stack:
                node, s, e = stack.pop()
                idx = order[s:e]
                bmin[node] = lo_t[idx].min(axis=0)
                bmax[node] = hi_t[idx].max(axis=0)
                if e - s <= LEAF_SIZE:
                    start[node], count[node] = s, e - s
                    continue
                c = cent[idx]
                axis = int(np.argmax(c.max(axis=0) - c.min(axis=0)))
                mid = (e - s) // 2
                part = np.argpartition(c[:, axis], mid, kind="introselect")
                order[s:e] = idx[part]
                l_node, r_node = new_node(), new_node()
                left[node], right[node] = l_node, r_node
                stack.append((r_node, s + mid, e))
                stack.append((l_node, s, s + mid))
        else:
            new_node()
            count[0] = 0
            start[0] = 0
        self.node_min = np.array(bmin, dtype=np.float64)
        self.node_max = np.array(bmax, dtype=np.float64)
        self.left = np.array(left, dtype=np.int64)
        self.right = np.array(right, dtype=np.int64)
        self.start = np.array(start, dtype=np.int64)
        self.count = np.array(count, dtype=np.int64)
        self.order = order
        ordered = corners[order] if n else np.zeros((0, 3, 3))
        self.v0 = np.ascontiguousarray(ordered[:, 0])
        self.e1 = np.ascontiguousarray(ordered[:, 1] - ordered[:, 0])
        self.e2 = np.ascontiguousarray(ordered[:, 2] - ordered[:, 0])

    def _args(self):
        return (self.node_min, self.node_max, self.left, self.right, self.start, self.count,
                self.order, self.v0, self.e1, self.e2)

    def closest(self, origins, dirs):
        """(triangle index or -1, distance) of the first hit per ray."""
        o = np.ascontiguousarray(origins, dtype=np.float64).reshape(-1, 3)
        d = np.ascontiguousarray(dirs, dtype=np.float64).reshape(-1, 3)
        return _closest_batch(o, d, *self._args())

    def occluded(self, origins, dirs, skip=None):
        """True where the ray hits any triangle (other than ``skip[i]``)."""
        o = np.ascontiguousarray(origins, dtype=np.float64).reshape(-1, 3)
        d = np.ascontiguousarray(dirs, dtype=np.float64).reshape(-1, 3)
        if d.shape[0] == 1 and o.shape[0] > 1:
            d = np.ascontiguousarray(np.broadcast_to(d, o.shape))
        sk = np.full(len(o), -1, dtype=np.int64) if skip is None else np.asarray(skip, dtype=np.int64)
        return _any_batch(o, d, sk, *self._args())


@numba.njit(cache=True, inline="always")
def _slab(ox, oy, oz, ix, iy, iz, bmin, bmax, tmax):
    t0 = 0.0
    t1 = tmax
    for a in range(3):
        o = ox if a == 0 else (oy if a == 1 else oz)
        inv = ix if a == 0 else (iy if a == 1 else iz)
        ta = (bmin[a] - o) * inv
        tb = (bmax[a] - o) * inv
        if ta > tb:
            ta, tb = tb, ta
        if ta > t0:
            t0 = ta
        if tb < t1:
            t1 = tb
        if t0 > t1:
            return False
    return True


@numba.njit(cache=True, inline="always")
def _tri(ox, oy, oz, dx, dy, dz, v0, e1, e2):
    # Moller-Trumbore, two-sided
    px = dy * e2[2] - dz * e2[1]
    py = dz * e2[0] - dx * e2[2]
    pz = dx * e2[1] - dy * e2[0]
    det = e1[0] * px + e1[1] * py + e1[2] * pz
    if abs(det) < 1e-14:
        return -1.0
    inv = 1.0 / det
    tx, ty, tz = ox - v0[0], oy - v0[1], oz - v0[2]
    u = (tx * px + ty * py + tz * pz) * inv
    if u < 0.0 or u > 1.0:
        return -1.0
    qx = ty * e1[2] - tz * e1[1]
    qy = tz * e1[0] - tx * e1[2]
    qz = tx * e1[1] - ty * e1[0]
    v = (dx * qx + dy * qy + dz * qz) * inv
    if v < 0.0 or u + v > 1.0:
        return -1.0
    t = (e2[0] * qx + e2[1] * qy + e2[2] * qz) * inv
    return t if t > 1e-9 else -1.0


@numba.njit(cache=True)
def _trace(ox, oy, oz, dx, dy, dz, any_hit, skip, node_min, node_max, left, right, start, count,
           order, v0, e1, e2):
    ix = 1.0 / dx if dx != 0.0 else 1e300
    iy = 1.0 / dy if dy != 0.0 else 1e300
    iz = 1.0 / dz if dz != 0.0 else 1e300
    best_t = 1e300
    best = -1
    stack = np.empty(128, dtype=np.int64)
    sp = 0
    stack[0] = 0
    sp = 1
    while sp > 0:
        sp -= 1
        node = stack[sp]
        if not _slab(ox, oy, oz, ix, iy, iz, node_min[node], node_max[node], best_t):
            continue
        if left[node] < 0:
            s = start[node]
            for k in range(s, s + count[node]):
                if order[k] == skip:
                    continue
                t = _tri(ox, oy, oz, dx, dy, dz, v0[k], e1[k], e2[k])
                if t > 0.0 and t < best_t:
                    best_t = t
                    best = order[k]
                    if any_hit:
                        return best, best_t
        else:
            stack[sp] = left[node]
            stack[sp + 1] = right[node]
            sp += 2
    return best, best_t


@numba.njit(cache=True, parallel=True)
def _closest_batch(o, d, node_min, node_max, left, right, start, count, order, v0, e1, e2):
    n = o.shape[0]
    hit = np.full(n, -1, dtype=np.int64)
    dist = np.full(n, np.inf)
    if order.shape[0] == 0:
        return hit, dist
    for r in numba.prange(n):
        h, t = _trace(o[r, 0], o[r, 1], o[r, 2], d[r, 0], d[r, 1], d[r, 2], False, -1,
                      node_min, node_max, left, right, start, count, order, v0, e1, e2)
        hit[r] = h
        if h >= 0:
            dist[r] = t
    return hit, dist


@numba.njit(cache=True, parallel=True)
def _any_batch(o, d, skip, node_min, node_max, left, right, start, count, order, v0, e1, e2):
    n = o.shape[0]
    out = np.zeros(n, dtype=np.bool_)
    if order.shape[0] == 0:
        return out
    for r in numba.prange(n):
        h, _ = _trace(o[r, 0], o[r, 1], o[r, 2], d[r, 0], d[r, 1], d[r, 2], True, skip[r],
                      node_min, node_max, left, right, start, count, order, v0, e1, e2)
        out[r] = h >= 0
    return out


# ---------------------------------------------------------------------------
# hemisphere sampling


def tangent_frames(normals: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n = np.asarray(normals, dtype=float)
    helper = np.where(np.abs(n[:, 2:3]) < 0.9, [[0.0, 0.0, 1.0]], [[1.0, 0.0, 0.0]])
    t1 = np.cross(helper, n)
    t1 /= np.linalg.norm(t1, axis=1, keepdims=True)
    t2 = np.cross(n, t1)
    return t1, t2


def cosine_directions(normals: np.ndarray, n_samples: int, rng: np.random.Generator) -> np.ndarray:
    """(N, n_samples, 3) iid cosine-weighted directions about each normal."""
    normals = np.atleast_2d(np.asarray(normals, dtype=float))
    u1 = rng.random((len(normals), n_samples))
    u2 = rng.random((len(normals), n_samples))
    r = np.sqrt(u1)
    phi = 2.0 * math.pi * u2
    lx, ly, lz = r * np.cos(phi), r * np.sin(phi), np.sqrt(np.maximum(0.0, 1.0 - u1))
    t1, t2 = tangent_frames(normals)
    return (lx[..., None] * t1[:, None, :] + ly[..., None] * t2[:, None, :]
            + lz[..., None] * normals[:, None, :])
