"""Compiled inner loops: closest point on triangle, BVH traversal, labeling.

Region codes returned by ``closest_point_triangle``::

    0 face, 1 vertex a, 2 vertex b, 3 vertex c, 4 edge ab, 5 edge bc, 6 edge ca
"""

import numpy as np
from numba import njit, prange

ON_SURFACE_EPS = 1e-12
STACK_SIZE = 128


@njit(cache=True, inline="always")
def _dot(ax, ay, az, bx, by, bz):
    return ax * bx + ay * by + az * bz


@njit(cache=True)
def closest_point_triangle(px, py, pz, tri):
    """Closest point of ``tri`` (3x3 array) to p, following Ericson's
    Voronoi-region walk. Returns (qx, qy, qz, region)."""
    ax, ay, az = tri[0, 0], tri[0, 1], tri[0, 2]
    bx, by, bz = tri[1, 0], tri[1, 1], tri[1, 2]
    cx, cy, cz = tri[2, 0], tri[2, 1], tri[2, 2]
    abx, aby, abz = bx - ax, by - ay, bz - az
    acx, acy, acz = cx - ax, cy - ay, cz - az
    apx, apy, apz = px - ax, py - ay, pz - az
    d1 = _dot(abx, aby, abz, apx, apy, apz)
    d2 = _dot(acx, acy, acz, apx, apy, apz)
    if d1 <= 0.0 and d2 <= 0.0:
        return ax, ay, az, 1
    bpx, bpy, bpz = px - bx, py - by, pz - bz
    d3 = _dot(abx, aby, abz, bpx, bpy, bpz)
    d4 = _dot(acx, acy, acz, bpx, bpy, bpz)
    if d3 >= 0.0 and d4 <= d3:
        return bx, by, bz, 2
    vc = d1 * d4 - d3 * d2
    if vc <= 0.0 and d1 >= 0.0 and d3 <= 0.0:
        v = d1 / (d1 - d3)
        return ax + v * abx, ay + v * aby, az + v * abz, 4
    cpx, cpy, cpz = px - cx, py - cy, pz - cz
    d5 = _dot(abx, aby, abz, cpx, cpy, cpz)
    d6 = _dot(acx, acy, acz, cpx, cpy, cpz)
    if d6 >= 0.0 and d5 <= d6:
        return cx, cy, cz, 3
    vb = d5 * d2 - d1 * d6
    if vb <= 0.0 and d2 >= 0.0 and d6 <= 0.0:
        w = d2 / (d2 - d6)
        return ax + w * acx, ay + w * acy, az + w * acz, 6
    va = d3 * d6 - d5 * d4
    if va <= 0.0 and (d4 - d3) >= 0.0 and (d5 - d6) >= 0.0:
        w = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        return bx + w * (cx - bx), by + w * (cy - by), bz + w * (cz - bz), 5
    denom = 1.0 / (va + vb + vc)
    v = vb * denom
    w = vc * denom
    return (ax + abx * v + acx * w, ay + aby * v + acy * w,
            az + abz * v + acz * w, 0)


@njit(cache=True, inline="always")
def _box_d2(px, py, pz, lo, hi):
    d2 = 0.0
    if px < lo[0]:
        d2 += (lo[0] - px) ** 2
    elif px > hi[0]:
        d2 += (px - hi[0]) ** 2
    if py < lo[1]:
        d2 += (lo[1] - py) ** 2
    elif py > hi[1]:
        d2 += (py - hi[1]) ** 2
    if pz < lo[2]:
        d2 += (lo[2] - pz) ** 2
    elif pz > hi[2]:
        d2 += (pz - hi[2]) ** 2
    return d2


@njit(cache=True)
def nearest_bvh(px, py, pz, tris, lo, hi, left, right, start, count):
    """Nearest triangle via BVH. Ties on squared distance go to the lowest
    triangle index so results match a linear scan exactly."""
    best = np.inf
    best_t = -1
    best_r = 0
    qx = qy = qz = 0.0
    stack = np.empty(STACK_SIZE, np.int64)
    stack[0] = 0
    sp = 1
    while sp > 0:
        sp -= 1
        node = stack[sp]
        if _box_d2(px, py, pz, lo[node], hi[node]) > best:
            continue
        if left[node] < 0:
            for t in range(start[node], start[node] + count[node]):
                x, y, z, r = closest_point_triangle(px, py, pz, tris[t])
                d2 = (px - x) ** 2 + (py - y) ** 2 + (pz - z) ** 2
                if d2 < best or (d2 == best and t < best_t):
                    best = d2
                    best_t = t
                    best_r = r
                    qx, qy, qz = x, y, z
        else:
            l = left[node]
            r = right[node]
            dl = _box_d2(px, py, pz, lo[l], hi[l])
            dr = _box_d2(px, py, pz, lo[r], hi[r])
            # push the farther child first so the nearer one is popped next
            if dl <= dr:
                stack[sp] = r
                stack[sp + 1] = l
            else:
                stack[sp] = l
                stack[sp + 1] = r
            sp += 2
    return best, best_t, best_r, qx, qy, qz


@njit(cache=True)
def nearest_linear(px, py, pz, tris):
    best = np.inf
    best_t = -1
    best_r = 0
    qx = qy = qz = 0.0
    for t in range(tris.shape[0]):
        x, y, z, r = closest_point_triangle(px, py, pz, tris[t])
        d2 = (px - x) ** 2 + (py - y) ** 2 + (pz - z) ** 2
        if d2 < best:
            best = d2
            best_t = t
            best_r = r
            qx, qy, qz = x, y, z
    return best, best_t, best_r, qx, qy, qz


@njit(cache=True, inline="always")
def _feature_normal(t, region, face_n, edge_n, vert_n):
    if region == 0:
        return face_n[t]
    if region <= 3:
        return vert_n[t, region - 1]
    return edge_n[t, region - 4]


@njit(cache=True)
def _sign_distance(px, py, pz, d2, t, region, qx, qy, qz,
                   closed, face_n, edge_n, vert_n):
    d = np.sqrt(d2)
    if d < ON_SURFACE_EPS:
        return 0.0
    if not closed:
        return d
    n = _feature_normal(t, region, face_n, edge_n, vert_n)
    s = (px - qx) * n[0] + (py - qy) * n[1] + (pz - qz) * n[2]
    if s < 0.0:
        return -d
    return d


@njit(cache=True)
def signed_distance_one(px, py, pz, tris, lo, hi, left, right, start, count,
                        closed, face_n, edge_n, vert_n):
    d2, t, r, qx, qy, qz = nearest_bvh(px, py, pz, tris, lo, hi, left, right,
                                       start, count)
    return _sign_distance(px, py, pz, d2, t, r, qx, qy, qz, closed,
                          face_n, edge_n, vert_n)


@njit(cache=True, parallel=True)
def query_many(points, tris, lo, hi, left, right, start, count,
               closed, face_n, edge_n, vert_n, linear):
    """Batch query. Returns (signed, unsigned, nearest points, triangle ids)."""
    n = points.shape[0]
    signed = np.empty(n)
    unsigned = np.empty(n)
    nearest = np.empty((n, 3))
    tri_ids = np.empty(n, np.int64)
    for i in prange(n):
        px, py, pz = points[i, 0], points[i, 1], points[i, 2]
        if linear:
            d2, t, r, qx, qy, qz = nearest_linear(px, py, pz, tris)
        else:
            d2, t, r, qx, qy, qz = nearest_bvh(px, py, pz, tris, lo, hi, left,
                                               right, start, count)
        d = np.sqrt(d2)
        unsigned[i] = d if d >= ON_SURFACE_EPS else 0.0
        signed[i] = _sign_distance(px, py, pz, d2, t, r, qx, qy, qz, closed,
                                   face_n, edge_n, vert_n)
        nearest[i, 0] = qx
        nearest[i, 1] = qy
        nearest[i, 2] = qz
        tri_ids[i] = t
    return signed, unsigned, nearest, tri_ids


@njit(cache=True, parallel=True)
def label_object(points, cand, object_id, tau, tris, lo, hi, left, right,
                 start, count, closed, face_n, edge_n, vert_n, best_d, best_o):
    """Offer one object as a candidate to the points ``cand``.

    Candidate order is (signed distance, object id) ascending, which puts
    interior hits (d <= 0, deepest first) ahead of exterior ones. ``cand``
    holds distinct indices so per-point updates never race.
    """
    for k in prange(cand.shape[0]):
        i = cand[k]
        d = signed_distance_one(points[i, 0], points[i, 1], points[i, 2],
                                tris, lo, hi, left, right, start, count,
                                closed, face_n, edge_n, vert_n)
        if d <= tau:
            if d < best_d[i] or (d == best_d[i] and object_id < best_o[i]):
                best_d[i] = d
                best_o[i] = object_id


@njit(cache=True, parallel=True)
def label_object_linear(points, object_id, tau, tris, closed, face_n, edge_n,
                        vert_n, best_d, best_o):
    """Brute-force counterpart of ``label_object``: every point, every
    triangle, no culling."""
    for i in prange(points.shape[0]):
        px, py, pz = points[i, 0], points[i, 1], points[i, 2]
        if not (np.isfinite(px) and np.isfinite(py) and np.isfinite(pz)):
            continue
        d2, t, r, qx, qy, qz = nearest_linear(px, py, pz, tris)
        d = _sign_distance(px, py, pz, d2, t, r, qx, qy, qz, closed,
                           face_n, edge_n, vert_n)
        if d <= tau:
            if d < best_d[i] or (d == best_d[i] and object_id < best_o[i]):
                best_d[i] = d
                best_o[i] = object_id


@njit(cache=True)
def grid_query(points, order, cell_start, origin, cell, dims, lo, hi):
    """Indices of points inside the closed box [lo, hi] using a sorted
    uniform grid. Output is unsorted."""
    i0 = np.empty(3, np.int64)
    i1 = np.empty(3, np.int64)
    for a in range(3):
        f0 = np.floor((lo[a] - origin[a]) / cell)
        f1 = np.floor((hi[a] - origin[a]) / cell)
        if f1 < 0 or f0 > dims[a] - 1:
            return np.empty(0, np.int64)
        i0[a] = max(0, int(f0))
        i1[a] = min(dims[a] - 1, int(f1))
    total = 0
    for ix in range(i0[0], i1[0] + 1):
        for iy in range(i0[1], i1[1] + 1):
            base = (ix * dims[1] + iy) * dims[2]
            total += cell_start[base + i1[2] + 1] - cell_start[base + i0[2]]
    out = np.empty(total, np.int64)
    m = 0
    for ix in range(i0[0], i1[0] + 1):
        for iy in range(i0[1], i1[1] + 1):
            base = (ix * dims[1] + iy) * dims[2]
            for s in range(cell_start[base + i0[2]], cell_start[base + i1[2] + 1]):
                j = order[s]
                x = points[j, 0]
                y = points[j, 1]
                z = points[j, 2]
                if (lo[0] <= x <= hi[0] and lo[1] <= y <= hi[1]
                        and lo[2] <= z <= hi[2]):
                    out[m] = j
                    m += 1
    return out[:m]
