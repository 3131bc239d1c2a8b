"""Wavefront OBJ subset reader/writer, class manifests and scene assembly."""

from __future__ import annotations

import fnmatch
import io
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (AmbiguousObject, ClassUnknown, EmptyMesh, IndexOutOfRange,
                     ManifestError, ParseError, UnmatchedObject, ValidationError)
from .geometry import Aabb, MeshIndex, build_index, mesh_aabb, triangle_normals
from .taxonomy import Taxonomy, by_id

log = logging.getLogger(__name__)

MESH_SUFFIX = ".obj"


@dataclass
class MeshData:
    """Parsed triangles ``(n, 3, 3)`` with unit normals ``(n, 3)``."""

    triangles: np.ndarray
    normals: np.ndarray
    ignored_records: int = 0

    def __len__(self):
        return self.triangles.shape[0]


def _resolve(tok, n, line_no, kind):
    try:
        i = int(tok)
    except ValueError:
        raise ParseError(f"bad {kind} index {tok!r}", line_no) from None
    if i > 0:
        i -= 1
    elif i < 0:
        i += n
    else:
        raise IndexOutOfRange(f"{kind} index 0 (indices are 1-based)", line_no)
    if not 0 <= i < n:
        raise IndexOutOfRange(f"{kind} index {tok} outside 1..{n}", line_no)
    return i


def _floats(parts, line_no, kind):
    if len(parts) < 3:
        raise ParseError(f"{kind} record needs 3 coordinates", line_no)
    try:
        xyz = [float(x) for x in parts[:3]]
    except ValueError:
        raise ParseError(f"non-numeric {kind} coordinate", line_no) from None
    if not all(np.isfinite(xyz)):
        raise ParseError(f"non-finite {kind} coordinate", line_no)
    return xyz


def parse_mesh(source) -> MeshData:
    """Parse ``v``/``vn``/``f`` records; polygons are fan-triangulated.

    ``source`` is bytes, text, a path, or a binary/text file object. A face
    normal comes from its vertex normals when every corner has one and they
    do not cancel out; otherwise it is recomputed from the winding.
    """
    text = _read_text(source)
    verts, vnorms = [], []
    tris, tri_vn = [], []
    ignored = 0
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        tag = parts[0]
        if tag == "v":
            verts.append(_floats(parts[1:], line_no, "vertex"))
        elif tag == "vn":
            vnorms.append(_floats(parts[1:], line_no, "normal"))
        elif tag == "f":
            if len(parts) < 4:
                raise ParseError("face needs at least 3 vertices", line_no)
            vi, ni = [], []
            for corner in parts[1:]:
                fields = corner.split("/")
                vi.append(_resolve(fields[0], len(verts), line_no, "vertex"))
                if len(fields) >= 3 and fields[2]:
                    ni.append(_resolve(fields[2], len(vnorms), line_no, "normal"))
                if len(fields) >= 2 and fields[1]:
                    try:
                        int(fields[1])
                    except ValueError:
                        raise ParseError(f"bad texture index {fields[1]!r}",
                                         line_no) from None
            has_n = len(ni) == len(vi)
            for k in range(1, len(vi) - 1):
                tris.append((vi[0], vi[k], vi[k + 1]))
                tri_vn.append((ni[0], ni[k], ni[k + 1]) if has_n else None)
        else:
            ignored += 1
    if not tris:
        raise EmptyMesh("mesh has no faces")
    if ignored:
        log.debug("ignored %d unsupported OBJ records", ignored)

    v = np.asarray(verts, dtype=np.float64)
    triangles = v[np.asarray(tris, dtype=np.int64)]
    normals, _ = triangle_normals(triangles)
    if vnorms:
        vn = np.asarray(vnorms, dtype=np.float64)
        for t, corner in enumerate(tri_vn):
            if corner is None:
                continue
            s = vn[list(corner)].sum(axis=0)
            norm = np.linalg.norm(s)
            if norm > 0:
                normals[t] = s / norm
    return MeshData(triangles, normals, ignored)


def _read_text(source):
    if isinstance(source, bytes):
        data = source
    elif isinstance(source, (str, os.PathLike)) and not (
            isinstance(source, str) and "\n" in source):
        data = Path(source).read_bytes()
    elif hasattr(source, "read"):
        data = source.read()
    else:
        data = source
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    return data


def format_mesh(triangles, name=None) -> str:
    """Serialize triangles as OBJ text with shared vertices and exact floats."""
    tris = np.asarray(triangles, dtype=np.float64).reshape(-1, 3, 3)
    flat = np.ascontiguousarray(tris.reshape(-1, 3))
    # weld on bit patterns so -0.0 and 0.0 stay distinct
    _, first, inv = np.unique(flat.view(np.uint64), axis=0, return_index=True,
                              return_inverse=True)
    verts = flat[first]
    faces = inv.reshape(-1, 3) + 1
    out = io.StringIO()
    if name:
        out.write(f"o {name}\n")
    for x, y, z in verts.tolist():
        out.write(f"v {x!r} {y!r} {z!r}\n")
    for a, b, c in faces.tolist():
        out.write(f"f {a} {b} {c}\n")
    return out.getvalue()


def write_mesh(triangles, path, name=None):
    Path(path).write_text(format_mesh(triangles, name), encoding="utf-8")


@dataclass
class ClassManifest:
    """Ordered ``glob pattern -> class name`` entries."""

    entries: list = field(default_factory=list)

    @classmethod
    def parse(cls, text: str) -> "ClassManifest":
        entries = []
        seen = set()
        for line_no, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ParseError("manifest entry must be 'pattern = Class'", line_no)
            pattern, name = (s.strip() for s in line.split("=", 1))
            if not pattern or not name:
                raise ParseError("empty pattern or class", line_no)
            if pattern in seen:
                raise ManifestError(f"line {line_no}: duplicate pattern {pattern!r}")
            seen.add(pattern)
            entries.append((pattern, name))
        return cls(entries)

    @classmethod
    def load(cls, path) -> "ClassManifest":
        return cls.parse(Path(path).read_text(encoding="utf-8"))

    def format(self) -> str:
        return "".join(f"{p} = {c}\n" for p, c in self.entries)

    def save(self, path):
        Path(path).write_text(self.format(), encoding="utf-8")

    def match(self, name: str) -> str:
        hits = [c for p, c in self.entries if fnmatch.fnmatchcase(name, p)]
        if not hits:
            raise UnmatchedObject(f"no manifest entry matches object {name!r}")
        if len(hits) > 1:
            raise AmbiguousObject(f"object {name!r} matches {len(hits)} manifest entries")
        return hits[0]


@dataclass(frozen=True, eq=False)
class ClassedMesh:
    object_id: int
    name: str
    class_id: int
    index: MeshIndex
    box: Aabb


@dataclass(frozen=True, eq=False)
class SceneModel:
    taxonomy: Taxonomy
    objects: tuple

    def __post_init__(self):
        if not self.objects:
            raise ValidationError("scene has no objects")
        ids = sorted(o.object_id for o in self.objects)
        if ids != list(range(len(ids))):
            raise ValidationError("object ids must be unique and dense from 0")
        for o in self.objects:
            if not 0 <= o.class_id < len(self.taxonomy):
                raise ClassUnknown(f"class id {o.class_id} invalid for {self.taxonomy.id}")

    def __len__(self):
        return len(self.objects)


def make_object(object_id, name, class_id, triangles) -> ClassedMesh:
    index = build_index(triangles)
    return ClassedMesh(object_id, name, class_id, index, mesh_aabb(index))


def _parse_file(path):
    try:
        return parse_mesh(path)
    except ParseError as e:
        raise type(e)(f"{path.name}: {e}") from None
    except EmptyMesh as e:
        raise EmptyMesh(f"{path.name}: {e}") from None


def load_scene(directory, manifest: ClassManifest, taxonomy, workers: int = 1) -> SceneModel:
    """One object per ``*.obj`` file, ids in lexicographic filename order."""
    tax = by_id(taxonomy) if isinstance(taxonomy, str) else taxonomy
    paths = sorted(Path(directory).glob("*" + MESH_SUFFIX), key=lambda p: p.name)
    if not paths:
        raise ValidationError(f"no {MESH_SUFFIX} files in {directory}")
    classes = []
    for p in paths:
        cname = manifest.match(p.stem)
        try:
            classes.append(tax.index(cname))
        except KeyError:
            raise ClassUnknown(f"class {cname!r} (object {p.stem!r}) is not in "
                               f"the {tax.id} taxonomy") from None
    if workers > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(workers) as ex:
            meshes = list(ex.map(_parse_file, paths))
    else:
        meshes = [_parse_file(p) for p in paths]
    objects = tuple(make_object(i, p.stem, c, m.triangles)
                    for i, (p, c, m) in enumerate(zip(paths, classes, meshes)))
    return SceneModel(tax, objects)


def save_scene(scene: SceneModel, directory) -> ClassManifest:
    """Write one OBJ per object plus ``manifest.txt``; names must sort in id order."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries = []
    for o in sorted(scene.objects, key=lambda o: o.object_id):
        write_mesh(o.index.triangles, directory / (o.name + MESH_SUFFIX), o.name)
        entries.append((o.name, scene.taxonomy.names[o.class_id]))
    manifest = ClassManifest(entries)
    manifest.save(directory / "manifest.txt")
    return manifest
