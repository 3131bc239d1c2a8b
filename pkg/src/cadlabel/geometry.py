"""Point-to-mesh distance queries backed by a bounding volume hierarchy.

Triangles are carried as ``(n, 3, 3)`` float64 arrays (triangle, vertex,
coordinate). A :class:`MeshIndex` is immutable once built and may be queried
from any number of threads.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import EmptyMesh

log = logging.getLogger(__name__)

DEGENERATE_AREA = 1e-12
LEAF_SIZE = 4


@dataclass(frozen=True)
class Aabb:
    min: np.ndarray
    max: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.min, dtype=np.float64).reshape(3)
        hi = np.asarray(self.max, dtype=np.float64).reshape(3)
        if np.any(lo > hi):
            raise ValueError(f"box min {lo} exceeds max {hi}")
        object.__setattr__(self, "min", lo)
        object.__setattr__(self, "max", hi)

    @classmethod
    def of_points(cls, pts) -> "Aabb":
        pts = np.asarray(pts, dtype=np.float64).reshape(-1, 3)
        return cls(pts.min(axis=0), pts.max(axis=0))

    def __repr__(self):
        return f"Aabb({self.min.tolist()}, {self.max.tolist()})"


def dilate(box: Aabb, r: float) -> Aabb:
    if r < 0:
        raise ValueError("dilation radius must be non-negative")
    return Aabb(box.min - r, box.max + r)


def contains(box: Aabb, p) -> bool:
    p = np.asarray(p, dtype=np.float64)
    return bool(np.all(box.min <= p) and np.all(p <= box.max))


def contains_many(box: Aabb, pts) -> np.ndarray:
    pts = np.asarray(pts, dtype=np.float64)
    return np.all((pts >= box.min) & (pts <= box.max), axis=1)


def triangle_normals(tris: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Unit normals from winding and triangle areas."""
    cr = np.cross(tris[:, 1] - tris[:, 0], tris[:, 2] - tris[:, 0])
    norm = np.linalg.norm(cr, axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        n = cr / norm[:, None]
    return n, 0.5 * norm


def _normalize_rows(v):
    norm = np.linalg.norm(v, axis=-1, keepdims=True)
    norm[norm == 0] = 1.0
    return v / norm


def _weld(tris):
    verts, inv = np.unique(tris.reshape(-1, 3), axis=0, return_inverse=True)
    return verts, inv.reshape(-1, 3).astype(np.int64)


def _is_closed(faces, nv):
    """Every edge shared by exactly two triangles with opposite direction."""
    a = faces.ravel()
    b = np.roll(faces, -1, axis=1).ravel()
    directed = a * nv + b
    if np.unique(directed).size != directed.size:
        return False
    reverse = b * nv + a
    return bool(np.all(np.isin(reverse, directed)))


def _pseudonormals(tris, faces, face_n):
    nt = tris.shape[0]
    nv = int(faces.max()) + 1
    # vertex normals weighted by incident angle
    vn = np.zeros((nv, 3))
    for k in range(3):
        e1 = tris[:, (k + 1) % 3] - tris[:, k]
        e2 = tris[:, (k + 2) % 3] - tris[:, k]
        cosang = np.einsum("ij,ij->i", _normalize_rows(e1), _normalize_rows(e2))
        ang = np.arccos(np.clip(cosang, -1.0, 1.0))
        np.add.at(vn, faces[:, k], ang[:, None] * face_n)
    vert_n = _normalize_rows(vn)[faces]

    # edge normals: sum of the two adjacent face normals
    a = faces
    b = np.roll(faces, -1, axis=1)
    key = np.minimum(a, b) * nv + np.maximum(a, b)
    uniq, inv = np.unique(key.ravel(), return_inverse=True)
    en = np.zeros((uniq.size, 3))
    np.add.at(en, inv, np.repeat(face_n, 3, axis=0))
    edge_n = _normalize_rows(en)[inv].reshape(nt, 3, 3)
    return edge_n, vert_n


def _build_bvh(tris):
    """Median-split BVH. Returns the triangle permutation and node arrays."""
    n = tris.shape[0]
    tlo = tris.min(axis=1)
    thi = tris.max(axis=1)
    cen = tris.mean(axis=1)
    perm = np.arange(n)
    lo, hi, left, right, start, count = [], [], [], [], [], []

    def new_node():
        lo.append(None)
        hi.append(None)
        left.append(-1)
        right.append(-1)
        start.append(0)
        count.append(0)
        return len(lo) - 1

    root = new_node()
    work = [(root, 0, n)]
    while work:
        node, s, e = work.pop()
        idx = perm[s:e]
        lo[node] = tlo[idx].min(axis=0)
        hi[node] = thi[idx].max(axis=0)
        if e - s <= LEAF_SIZE:
            start[node] = s
            count[node] = e - s
            continue
        c = cen[idx]
        axis = int(np.argmax(c.max(axis=0) - c.min(axis=0)))
        mid = (e - s) // 2
        part = np.argpartition(c[:, axis], mid, kind="introselect")
        perm[s:e] = idx[part]
        l, r = new_node(), new_node()
        left[node] = l
        right[node] = r
        work.append((r, s + mid, e))
        work.append((l, s, s + mid))

    lo = np.array(lo)
    hi = np.array(hi)
    # pad so rounding in the triangle kernel can never beat its box bound
    pad = 1e-9 * (1.0 + np.abs(np.concatenate([lo, hi])).max())
    return (perm, lo - pad, hi + pad, np.array(left, np.int64),
            np.array(right, np.int64), np.array(start, np.int64),
            np.array(count, np.int64))


@dataclass(frozen=True, eq=False)
class MeshIndex:
    """Triangles in BVH order plus hierarchy and pseudonormals."""

    triangles: np.ndarray
    face_normals: np.ndarray
    node_lo: np.ndarray
    node_hi: np.ndarray
    node_left: np.ndarray
    node_right: np.ndarray
    node_start: np.ndarray
    node_count: np.ndarray
    edge_normals: np.ndarray
    vertex_normals: np.ndarray
    closed: bool
    dropped: int = 0
    flipped: bool = False

    @property
    def n_triangles(self) -> int:
        return self.triangles.shape[0]

    def _kernel_args(self):
        return (self.triangles, self.node_lo, self.node_hi, self.node_left,
                self.node_right, self.node_start, self.node_count, self.closed,
                self.face_normals, self.edge_normals, self.vertex_normals)


def build_index(triangles) -> MeshIndex:
    """Filter degenerate triangles, detect watertightness and build the BVH.

    Closed meshes wound inward (negative enclosed volume) are flipped so that
    face normals point outward.
    """
    tris = np.ascontiguousarray(triangles, dtype=np.float64).reshape(-1, 3, 3)
    if not np.all(np.isfinite(tris)):
        raise EmptyMesh("mesh contains non-finite vertex coordinates")
    _, area = triangle_normals(tris)
    keep = area > DEGENERATE_AREA
    dropped = int((~keep).sum())
    if dropped:
        log.warning("dropped %d degenerate triangles", dropped)
    tris = tris[keep]
    if tris.shape[0] == 0:
        raise EmptyMesh("no non-degenerate triangles")

    verts, faces = _weld(tris)
    closed = _is_closed(faces, verts.shape[0])
    flipped = False
    if closed:
        vol = np.einsum("ij,ij->i", tris[:, 0], np.cross(tris[:, 1], tris[:, 2])).sum()
        if vol < 0:
            tris = tris[:, [0, 2, 1]]
            faces = faces[:, [0, 2, 1]]
            flipped = True

    perm, lo, hi, left, right, start, count = _build_bvh(tris)
    tris = np.ascontiguousarray(tris[perm])
    faces = faces[perm]
    face_n, _ = triangle_normals(tris)
    if closed:
        edge_n, vert_n = _pseudonormals(tris, faces, face_n)
    else:
        # pseudonormals are meaningless without a well-defined inside
        edge_n = np.zeros((tris.shape[0], 3, 3))
        vert_n = np.zeros((tris.shape[0], 3, 3))

    arrays = [tris, face_n, lo, hi, left, right, start, count, edge_n, vert_n]
    for a in arrays:
        a.flags.writeable = False
    return MeshIndex(tris, face_n, lo, hi, left, right, start, count,
                     edge_n, vert_n, closed, dropped, flipped)


def mesh_aabb(index: MeshIndex) -> Aabb:
    return Aabb.of_points(index.triangles.reshape(-1, 3))


def _as_points(p):
    pts = np.ascontiguousarray(p, dtype=np.float64)
    single = pts.ndim == 1
    return pts.reshape(-1, 3), single


def query(index: MeshIndex, points, brute_force: bool = False):
    """Batch query returning ``(signed, unsigned, nearest, triangle_id)``.

    ``brute_force`` scans every triangle instead of walking the hierarchy;
    both paths share the triangle kernel and tie-break on triangle index.
    """
    pts, _ = _as_points(points)
    return _kernels.query_many(pts, *index._kernel_args(), brute_force)


def unsigned_distance(index: MeshIndex, p):
    """Distance and closest mesh point for one point ``(3,)`` or many ``(n, 3)``."""
    pts, single = _as_points(p)
    _, d, q, _ = query(index, pts)
    if single:
        return float(d[0]), q[0]
    return d, q


def signed_distance(index: MeshIndex, p):
    """Signed distance, negative inside. Open meshes return the unsigned value."""
    pts, single = _as_points(p)
    s, _, _, _ = query(index, pts)
    if single:
        return float(s[0])
    return s
