"""Synthetic rooms: box-mesh scenes and surface-sampled clouds with exact labels.

The room interior spans ``[0, L]`` on each axis. Walls, floor slab and
ceiling covering are boxes of ``wall_thickness`` around it; placed objects
are axis-aligned boxes. Sampled points that land on or inside a different
object are discarded (they could never be scanned), which also keeps the
ground truth unambiguous on coincident faces.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from .cloud import LabeledCloud
from .errors import OverlapError, ValidationError
from .geometry import dilate, contains_many, query, triangle_normals
from .meshio import SceneModel, make_object
from .taxonomy import GOLD, UNLABELED, by_id

# arbitrary per-class appearance; only needs to be fixed
APPEARANCE = {
    "Column": (0.55, (94, 60, 138)),
    "Components": (0.35, (200, 120, 40)),
    "Covering": (0.80, (230, 230, 220)),
    "Damper": (0.60, (5, 255, 242)),
    "Door": (0.45, (140, 90, 50)),
    "Exit sign": (0.90, (20, 200, 60)),
    "Fire terminal": (0.70, (20, 40, 160)),
    "Furniture": (0.30, (170, 150, 110)),
    "Heater": (0.65, (240, 240, 240)),
    "Lamp": (0.95, (165, 245, 242)),
    "Outlet": (0.50, (250, 250, 250)),
    "Railing": (0.40, (90, 90, 90)),
    "Slab": (0.25, (120, 120, 120)),
    "Stair": (0.28, (110, 100, 95)),
    "Switch": (0.52, (191, 48, 41)),
    "Wall": (0.75, (215, 210, 200)),
    "Window": (0.10, (150, 200, 255)),
    "Clutter": (0.20, (255, 3, 0)),
}

SURFACE_CULL_EPS = 1e-9
OUTLIER_STREAM = 1_000_003


@dataclass
class Placement:
    cls: str
    min: tuple
    max: tuple
    name: str = ""


@dataclass
class RoomSpec:
    extents: tuple = (6.0, 5.0, 3.0)
    wall_thickness: float = 0.2
    objects: list = field(default_factory=list)
    density: float = 300.0
    sigma: float = 0.0
    outliers: int = 0
    seed: int = 0
    taxonomy: str = "Gold"

    def __post_init__(self):
        self.extents = tuple(float(v) for v in self.extents)
        if len(self.extents) != 3 or min(self.extents) <= 0:
            raise ValidationError("room extents must be three positive lengths")
        if not self.wall_thickness > 0:
            raise ValidationError("wall thickness must be positive")
        if not self.density > 0:
            raise ValidationError("density must be positive")
        if not self.sigma >= 0:
            raise ValidationError("sigma must be >= 0")
        if self.outliers < 0:
            raise ValidationError("outlier count must be >= 0")
        self.objects = [p if isinstance(p, Placement) else _placement(p) for p in self.objects]

    @classmethod
    def from_dict(cls, d: dict) -> "RoomSpec":
        known = {"extents", "wall_thickness", "objects", "density", "sigma",
                 "outliers", "seed", "taxonomy"}
        unknown = set(d) - known
        if unknown:
            raise ValidationError(f"unknown room spec keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def load(cls, path) -> "RoomSpec":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["objects"] = [{"class": p.cls, "min": list(p.min), "max": list(p.max),
                         **({"name": p.name} if p.name else {})} for p in self.objects]
        d["extents"] = list(self.extents)
        return d


def _placement(d):
    try:
        return Placement(d["class"], tuple(map(float, d["min"])), tuple(map(float, d["max"])),
                         d.get("name", ""))
    except (KeyError, TypeError) as e:
        raise ValidationError(f"bad object placement {d!r}: {e}") from None


_BOX_FACES = np.array([
    (0, 1, 3), (0, 3, 2), (4, 6, 7), (4, 7, 5), (0, 4, 5), (0, 5, 1),
    (2, 3, 7), (2, 7, 6), (0, 2, 6), (0, 6, 4), (1, 5, 7), (1, 7, 3),
])
_CORNERS = np.array([[x, y, z] for x in (0, 1) for y in (0, 1) for z in (0, 1)], float)


def box_triangles(lo, hi) -> np.ndarray:
    """12 outward-wound triangles of an axis-aligned box."""
    lo = np.asarray(lo, float)
    hi = np.asarray(hi, float)
    return (lo + _CORNERS * (hi - lo))[_BOX_FACES]


def _structure(spec):
    lx, ly, lz = spec.extents
    t = spec.wall_thickness
    return [
        ("slab", "Slab", (-t, -t, -t), (lx + t, ly + t, 0.0)),
        ("covering", "Covering", (-t, -t, lz), (lx + t, ly + t, lz + t)),
        ("wall_west", "Wall", (-t, 0.0, 0.0), (0.0, ly, lz)),
        ("wall_east", "Wall", (lx, 0.0, 0.0), (lx + t, ly, lz)),
        ("wall_south", "Wall", (-t, -t, 0.0), (lx + t, 0.0, lz)),
        ("wall_north", "Wall", (-t, ly, 0.0), (lx + t, ly + t, lz)),
    ]


def build_scene(spec: RoomSpec) -> SceneModel:
    tax = by_id(spec.taxonomy)
    parts = _structure(spec)
    t = spec.wall_thickness
    outer_lo = np.array([-t, -t, -t])
    outer_hi = np.array(spec.extents) + t
    for k, p in enumerate(spec.objects):
        lo, hi = np.array(p.min, float), np.array(p.max, float)
        if lo.shape != (3,) or hi.shape != (3,) or np.any(lo >= hi):
            raise ValidationError(f"object {k} ({p.cls}) needs min < max on every axis")
        if np.any(lo < outer_lo) or np.any(hi > outer_hi):
            raise OverlapError(f"object {k} ({p.cls}) leaves the room bounds")
        parts.append((p.name or p.cls.lower().replace(" ", "_"), p.cls, tuple(lo), tuple(hi)))
    objects = []
    for i, (name, cls, lo, hi) in enumerate(parts):
        try:
            cid = tax.index(cls)
        except KeyError:
            raise ValidationError(f"class {cls!r} not in {tax.id}") from None
        objects.append(make_object(i, f"{i:03d}_{name}", cid, box_triangles(lo, hi)))
    return SceneModel(tax, tuple(objects))


@dataclass
class SampleStats:
    emitted: np.ndarray  # per object, before culling
    kept: np.ndarray  # per object, after culling
    outliers: int
    area: np.ndarray  # per object surface area


def _appearance(tax):
    inten = np.array([APPEARANCE[n][0] for n in tax.names], np.float32)
    rgb = np.array([APPEARANCE[n][1] for n in tax.names], np.uint8)
    return inten, rgb


def sample_cloud(scene: SceneModel, spec: RoomSpec, return_stats: bool = False):
    """Poisson(density x area) surface samples per object, culled, then noised.

    Each object draws from its own stream seeded by ``(seed, object_id)``.
    """
    tax = scene.taxonomy
    objs = sorted(scene.objects, key=lambda o: o.object_id)
    pos_parts, lab_parts = [], []
    emitted = np.zeros(len(objs), np.int64)
    kept = np.zeros(len(objs), np.int64)
    areas = np.zeros(len(objs))
    for o in objs:
        rng = np.random.default_rng([spec.seed, o.object_id])
        tris = o.index.triangles
        _, area = triangle_normals(tris)
        areas[o.object_id] = area.sum()
        n = rng.poisson(spec.density * area.sum())
        emitted[o.object_id] = n
        t = rng.choice(len(tris), size=n, p=area / area.sum())
        r1, r2 = rng.random(n), rng.random(n)
        flip = r1 + r2 > 1
        r1[flip], r2[flip] = 1 - r1[flip], 1 - r2[flip]
        a, b, c = tris[t, 0], tris[t, 1], tris[t, 2]
        p = a + r1[:, None] * (b - a) + r2[:, None] * (c - a)
        hidden = np.zeros(n, bool)
        for other in objs:
            if other is o:
                continue
            near = np.flatnonzero(contains_many(dilate(other.box, SURFACE_CULL_EPS), p))
            if near.size:
                d = query(other.index, p[near])[0]
                hidden[near[d <= SURFACE_CULL_EPS]] = True
        p = p[~hidden]
        kept[o.object_id] = p.shape[0]
        if spec.sigma > 0:
            p = p + rng.normal(0.0, spec.sigma, p.shape)
        pos_parts.append(p)
        lab_parts.append(np.full(p.shape[0], o.class_id, np.uint8))
    if spec.outliers:
        rng = np.random.default_rng([spec.seed, OUTLIER_STREAM])
        pos_parts.append(rng.random((spec.outliers, 3)) * np.array(spec.extents))
        lab_parts.append(np.full(spec.outliers, tax.clutter_id, np.uint8))
    pos = np.concatenate(pos_parts) if pos_parts else np.zeros((0, 3))
    labels = np.concatenate(lab_parts) if lab_parts else np.zeros(0, np.uint8)
    inten, rgb = _appearance(tax)
    cloud = LabeledCloud(pos, rgb[labels], inten[labels], labels,
                         np.full(labels.size, UNLABELED, np.uint8), tax,
                         f"synthetic-{spec.seed}")
    if return_stats:
        return cloud, SampleStats(emitted, kept, spec.outliers, areas)
    return cloud


def standard_room(seed: int = 0, **overrides) -> RoomSpec:
    """A 6 x 5 x 3 m office with a door, window, table, heater, lamp and more."""
    objects = [
        {"class": "Door", "min": [-0.2, 1.0, 0.0], "max": [0.05, 1.9, 2.1]},
        {"class": "Window", "min": [5.95, 1.5, 1.0], "max": [6.2, 3.5, 2.2]},
        {"class": "Furniture", "min": [2.0, 2.0, 0.0], "max": [3.6, 2.8, 0.75]},
        {"class": "Furniture", "min": [2.4, 1.3, 0.0], "max": [2.9, 1.8, 0.9]},
        {"class": "Heater", "min": [3.0, 4.85, 0.2], "max": [4.2, 5.0, 0.8]},
        {"class": "Lamp", "min": [2.5, 2.2, 2.9], "max": [3.1, 2.6, 3.0]},
        {"class": "Switch", "min": [0.0, 2.0, 1.1], "max": [0.02, 2.08, 1.18]},
        {"class": "Damper", "min": [4.0, 1.0, 2.95], "max": [4.1, 1.1, 3.0]},
        {"class": "Column", "min": [5.5, 0.0, 0.0], "max": [6.0, 0.5, 3.0]},
    ]
    params = dict(objects=objects, seed=seed)
    params.update(overrides)
    return RoomSpec(**params)


def random_room(seed: int, max_objects: int = 14, density: float = 60.0,
                sigma: float = 0.01, outliers: int = 200) -> RoomSpec:
    """Random room with up to ``max_objects`` placed boxes (which may overlap)."""
    rng = np.random.default_rng([seed, 7])
    ext = rng.uniform([3.0, 3.0, 2.4], [7.0, 6.0, 3.5])
    names = [n for n in GOLD.names if n not in ("Clutter",)]
    objects = []
    for _ in range(int(rng.integers(0, max_objects + 1))):
        size = rng.uniform(0.05, 1.5, 3) * rng.uniform(0.2, 1.0)
        lo = rng.uniform([-0.1, -0.1, 0.0], ext - size)
        objects.append({"class": str(rng.choice(names)), "min": lo.tolist(),
                        "max": (lo + size).tolist()})
    return RoomSpec(extents=tuple(ext), wall_thickness=float(rng.uniform(0.1, 0.3)),
                    objects=objects, density=density, sigma=sigma, outliers=outliers,
                    seed=seed)
