"""Columnar labeled point clouds: binary/ASCII persistence, voxel subsampling,
uniform-grid box queries and class histograms.

Binary layout (little-endian, no padding)::

    magic "PCL3DSES" | version u16 | taxonomy u8 | flags u8 | count u64 |
    12 reserved bytes | x f64[n] | y f64[n] | z f64[n] | r u8[n] | g u8[n] |
    b u8[n] | intensity f32[n] | real_label u8[n] | pseudo_label u8[n]
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass, replace
from pathlib import Path
from typing import NamedTuple

import numpy as np

from . import _kernels
from .errors import (BadHeader, BadMagic, BadVersion, IntensityOutOfRange,
                     LabelOutOfRange, LengthMismatch, TruncatedFile, ValidationError)
from .geometry import Aabb
from .taxonomy import UNLABELED, Taxonomy, by_code, by_id

MAGIC = b"PCL3DSES"
VERSION = 1
HEADER = struct.Struct("<8sHBBQ12s")
BYTES_PER_POINT = 3 * 8 + 3 + 4 + 2


@dataclass(frozen=True, eq=False)
class LabeledCloud:
    positions: np.ndarray
    colors: np.ndarray
    intensity: np.ndarray
    real_label: np.ndarray
    pseudo_label: np.ndarray
    taxonomy: Taxonomy
    scan_id: str = ""

    def __post_init__(self):
        pos = np.ascontiguousarray(self.positions, dtype=np.float64).reshape(-1, 3)
        n = pos.shape[0]
        col = np.ascontiguousarray(self.colors).reshape(-1, 3)
        inten = np.ascontiguousarray(self.intensity, dtype=np.float32).reshape(-1)
        real = np.ascontiguousarray(self.real_label).reshape(-1)
        pseudo = np.ascontiguousarray(self.pseudo_label).reshape(-1)
        if not (col.shape[0] == inten.size == real.size == pseudo.size == n):
            raise LengthMismatch("cloud columns differ in length")
        for name, arr in (("color", col), ("real label", real), ("pseudo label", pseudo)):
            if arr.dtype != np.uint8 and arr.size and (arr.min() < 0 or arr.max() > 255):
                raise ValidationError(f"{name} values must fit in 8 bits")
        col = col.astype(np.uint8, copy=False)
        real = real.astype(np.uint8, copy=False)
        pseudo = pseudo.astype(np.uint8, copy=False)
        _check_intensity(inten)
        tax = by_id(self.taxonomy)
        _check_labels(real, tax, "real")
        _check_labels(pseudo, tax, "pseudo")
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "colors", col)
        object.__setattr__(self, "intensity", inten)
        object.__setattr__(self, "real_label", real)
        object.__setattr__(self, "pseudo_label", pseudo)
        object.__setattr__(self, "taxonomy", tax)

    def __len__(self):
        return self.positions.shape[0]

    @classmethod
    def empty(cls, taxonomy, n=0, scan_id=""):
        return cls(np.zeros((n, 3)), np.zeros((n, 3), np.uint8), np.zeros(n, np.float32),
                   np.full(n, UNLABELED, np.uint8), np.full(n, UNLABELED, np.uint8),
                   taxonomy, scan_id)

    def take(self, idx) -> "LabeledCloud":
        return replace(self, positions=self.positions[idx], colors=self.colors[idx],
                       intensity=self.intensity[idx], real_label=self.real_label[idx],
                       pseudo_label=self.pseudo_label[idx])

    def with_pseudo(self, labels) -> "LabeledCloud":
        return replace(self, pseudo_label=np.asarray(labels, dtype=np.uint8))

    def labels(self, which: str) -> np.ndarray:
        if which not in ("real", "pseudo"):
            raise ValueError(f"label column must be 'real' or 'pseudo', not {which!r}")
        return self.real_label if which == "real" else self.pseudo_label

    def extent(self):
        finite = np.all(np.isfinite(self.positions), axis=1)
        if not finite.any():
            return None
        return Aabb.of_points(self.positions[finite])

    def identical(self, other: "LabeledCloud") -> bool:
        """Bit-level equality of every column and the taxonomy."""
        return (self.taxonomy is other.taxonomy
                and len(self) == len(other)
                and self.positions.tobytes() == other.positions.tobytes()
                and self.colors.tobytes() == other.colors.tobytes()
                and self.intensity.tobytes() == other.intensity.tobytes()
                and self.real_label.tobytes() == other.real_label.tobytes()
                and self.pseudo_label.tobytes() == other.pseudo_label.tobytes())


def _check_intensity(inten):
    bad = ~((inten >= 0) & (inten <= 1))
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise IntensityOutOfRange(f"intensity {float(inten[i])!r} at point {i} outside [0, 1]")


def _check_labels(labels, tax, which):
    bad = (labels >= len(tax)) & (labels != UNLABELED)
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise LabelOutOfRange(f"{which} label {int(labels[i])} at point {i} invalid "
                              f"for {tax.id} (0..{len(tax) - 1} or {UNLABELED})")


def encode_cloud(cloud: LabeledCloud) -> bytes:
    n = len(cloud)
    header = HEADER.pack(MAGIC, VERSION, cloud.taxonomy.code, 0, n, bytes(12))
    pos = cloud.positions
    parts = [header]
    for a in range(3):
        parts.append(np.ascontiguousarray(pos[:, a]).astype("<f8").tobytes())
    for a in range(3):
        parts.append(np.ascontiguousarray(cloud.colors[:, a]).tobytes())
    parts.append(cloud.intensity.astype("<f4").tobytes())
    parts.append(cloud.real_label.tobytes())
    parts.append(cloud.pseudo_label.tobytes())
    return b"".join(parts)


def decode_cloud(data: bytes, scan_id: str = "") -> LabeledCloud:
    if len(data) < HEADER.size:
        if not MAGIC.startswith(data[:8]):
            raise BadMagic("not a cloud file")
        raise TruncatedFile(f"header needs {HEADER.size} bytes, file has {len(data)}")
    magic, version, tax_code, _flags, n, _ = HEADER.unpack_from(data)
    if magic != MAGIC:
        raise BadMagic(f"bad magic {magic!r}")
    if version != VERSION:
        raise BadVersion(f"unsupported version {version}")
    try:
        tax = by_code(tax_code)
    except KeyError:
        raise BadHeader(f"unknown taxonomy code {tax_code}") from None
    expected = HEADER.size + n * BYTES_PER_POINT
    if len(data) < expected:
        raise TruncatedFile(f"expected {expected} bytes for {n} points, got {len(data)}")
    if len(data) > expected:
        raise BadHeader(f"{len(data) - expected} trailing bytes after {n} points")
    off = HEADER.size

    def block(dtype):
        nonlocal off
        arr = np.frombuffer(data, dtype=dtype, count=n, offset=off)
        off += arr.nbytes
        return arr

    x, y, z = block("<f8"), block("<f8"), block("<f8")
    r, g, b = block("u1"), block("u1"), block("u1")
    inten = block("<f4").astype(np.float32)
    real = block("u1").copy()
    pseudo = block("u1").copy()
    return LabeledCloud(np.column_stack([x, y, z]).astype(np.float64),
                        np.column_stack([r, g, b]), inten, real, pseudo, tax, scan_id)


def write_cloud(cloud: LabeledCloud, sink):
    data = encode_cloud(cloud)
    if hasattr(sink, "write"):
        sink.write(data)
    else:
        Path(sink).write_bytes(data)


def read_cloud(source) -> LabeledCloud:
    if isinstance(source, (bytes, bytearray, memoryview)):
        return decode_cloud(bytes(source))
    if hasattr(source, "read"):
        return decode_cloud(source.read())
    path = Path(source)
    return decode_cloud(path.read_bytes(), scan_id=path.stem)


ASCII_TAG = "# cadlabel-ascii"


def format_ascii(cloud: LabeledCloud) -> str:
    """One point per line: x y z r g b intensity real_label pseudo_label."""
    out = io.StringIO()
    out.write(f"{ASCII_TAG} taxonomy={cloud.taxonomy.id} scan_id={cloud.scan_id}\n")
    pos = cloud.positions.tolist()
    col = cloud.colors.tolist()
    inten = cloud.intensity.astype(np.float64).tolist()
    real = cloud.real_label.tolist()
    pseudo = cloud.pseudo_label.tolist()
    for (x, y, z), (r, g, b), i, rl, pl in zip(pos, col, inten, real, pseudo):
        out.write(f"{x!r} {y!r} {z!r} {r} {g} {b} {i!r} {rl} {pl}\n")
    return out.getvalue()


def parse_ascii(text: str) -> LabeledCloud:
    lines = text.splitlines()
    if not lines or not lines[0].startswith(ASCII_TAG):
        raise BadMagic("missing ASCII cloud header line")
    meta = dict(tok.split("=", 1) for tok in lines[0][len(ASCII_TAG):].split() if "=" in tok)
    try:
        tax = by_id(meta.get("taxonomy", "Gold"))
    except KeyError:
        raise BadHeader(f"unknown taxonomy {meta.get('taxonomy')!r}") from None
    rows = [ln.split() for ln in lines[1:] if ln.strip() and not ln.startswith("#")]
    for k, row in enumerate(rows):
        if len(row) != 9:
            raise TruncatedFile(f"point {k}: expected 9 fields, got {len(row)}")
    n = len(rows)
    if n == 0:
        return LabeledCloud.empty(tax, 0, meta.get("scan_id", ""))
    try:
        pos = np.array([[float(v) for v in r[:3]] for r in rows], dtype=np.float64)
        col = np.array([[int(v) for v in r[3:6]] for r in rows], dtype=np.int64)
        inten = np.array([float(r[6]) for r in rows], dtype=np.float64)
        labels = np.array([[int(v) for v in r[7:9]] for r in rows], dtype=np.int64)
    except ValueError as e:
        raise BadHeader(f"malformed ASCII record: {e}") from None
    if col.min() < 0 or col.max() > 255:
        raise ValidationError("color component outside 0..255")
    if labels.min() < 0 or labels.max() > 255:
        raise LabelOutOfRange("label outside 0..255")
    _check_intensity(inten)
    return LabeledCloud(pos, col.astype(np.uint8), inten.astype(np.float32),
                        labels[:, 0].astype(np.uint8), labels[:, 1].astype(np.uint8),
                        tax, meta.get("scan_id", ""))


def voxel_subsample(cloud: LabeledCloud, cell: float = 0.01, seed=None) -> LabeledCloud:
    """Keep one point per occupied voxel of edge ``cell``.

    The survivor is the member nearest the voxel's centroid, lowest input
    index on ties; survivors keep their input order. Selection is fully
    deterministic, so ``seed`` is accepted only for interface stability.
    Points with non-finite coordinates occupy no voxel and are dropped.
    """
    if not cell > 0:
        raise ValueError("cell must be positive")
    pos = cloud.positions
    finite = np.flatnonzero(np.all(np.isfinite(pos), axis=1))
    if finite.size == 0:
        return cloud.take(finite)
    p = pos[finite]
    keys = np.floor(p / cell).astype(np.int64)
    _, group = np.unique(keys, axis=0, return_inverse=True)
    group = group.reshape(-1)
    ng = int(group.max()) + 1
    counts = np.bincount(group, minlength=ng)
    centroid = np.column_stack([np.bincount(group, p[:, a], minlength=ng) / counts
                                for a in range(3)])
    d2 = ((p - centroid[group]) ** 2).sum(axis=1)
    order = np.lexsort((np.arange(p.shape[0]), d2, group))
    gs = group[order]
    first = np.ones(gs.size, dtype=bool)
    first[1:] = gs[1:] != gs[:-1]
    keep = np.sort(finite[order[first]])
    return cloud.take(keep)


MAX_GRID_CELLS = 1 << 24


@dataclass(frozen=True, eq=False)
class PointGrid:
    """Uniform grid over finite points; points sorted by linear cell key."""

    points: np.ndarray
    origin: np.ndarray
    cell: float
    dims: np.ndarray
    order: np.ndarray
    cell_start: np.ndarray

    def query_box(self, box: Aabb) -> np.ndarray:
        return query_box(self, box)


def build_point_grid(positions, cell: float | None = None) -> PointGrid:
    """Index finite points. ``cell`` defaults to 1/128 of the largest extent
    and is enlarged if the grid would exceed ``MAX_GRID_CELLS`` cells."""
    if isinstance(positions, LabeledCloud):
        positions = positions.positions
    pts = np.ascontiguousarray(positions, dtype=np.float64).reshape(-1, 3)
    finite = np.flatnonzero(np.all(np.isfinite(pts), axis=1))
    if finite.size:
        lo = pts[finite].min(axis=0)
        hi = pts[finite].max(axis=0)
    else:
        lo = hi = np.zeros(3)
    span = hi - lo
    if cell is None:
        cell = float(span.max()) / 128 or 1.0
    if not cell > 0:
        raise ValueError("cell must be positive")
    while True:
        dims = (np.floor(span / cell).astype(np.int64) + 1)
        if int(np.prod(dims)) <= MAX_GRID_CELLS:
            break
        cell *= 2.0
    idx = np.minimum(np.floor((pts[finite] - lo) / cell).astype(np.int64), dims - 1)
    key = (idx[:, 0] * dims[1] + idx[:, 1]) * dims[2] + idx[:, 2]
    srt = np.argsort(key, kind="stable")
    order = finite[srt]
    counts = np.bincount(key, minlength=int(np.prod(dims)))
    cell_start = np.zeros(counts.size + 1, np.int64)
    np.cumsum(counts, out=cell_start[1:])
    return PointGrid(pts, lo, float(cell), dims, order.astype(np.int64), cell_start)


def query_box(grid: PointGrid, box: Aabb) -> np.ndarray:
    """Sorted indices of points inside the closed box."""
    if grid.order.size == 0:
        return np.empty(0, np.int64)
    out = _kernels.grid_query(grid.points, grid.order, grid.cell_start, grid.origin,
                              grid.cell, grid.dims, box.min, box.max)
    out.sort()
    return out


class ClassHistogram(NamedTuple):
    counts: np.ndarray
    unlabeled: int

    def as_dict(self, taxonomy: Taxonomy) -> dict:
        return {name: int(c) for name, c in zip(taxonomy.names, self.counts)}


def class_histogram(cloud: LabeledCloud, which: str = "real") -> ClassHistogram:
    labels = cloud.labels(which)
    k = len(cloud.taxonomy)
    labeled = labels[labels != UNLABELED]
    counts = np.bincount(labeled, minlength=k)[:k].astype(np.int64)
    return ClassHistogram(counts, int(labels.size - labeled.size))
