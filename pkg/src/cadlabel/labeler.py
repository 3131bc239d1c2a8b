"""Pseudo-labeling a point cloud against a classed mesh scene.

For every point, each object whose threshold-dilated bounding box contains
the point is a candidate with signed distance ``d``; a candidate is legal
when ``d <= tau(class)``. The winner minimizes ``(d, object_id)``, so an
interior hit (``d <= 0``, deepest first) always beats an exterior one. Points
with no legal candidate become Clutter.
"""

from __future__ import annotations

import contextlib
import logging
import time
from dataclasses import dataclass, field

import numba
import numpy as np

from . import _kernels
from .cloud import LabeledCloud, build_point_grid, query_box
from .errors import TaxonomyMismatch, ValidationError
from .geometry import dilate
from .meshio import SceneModel
from .taxonomy import GOLD, SILVER, Taxonomy

log = logging.getLogger(__name__)

# extra margin on culling boxes; keeps rounding from discarding a point at
# exactly tau
CULL_PAD = 1e-9


@dataclass(frozen=True)
class ThresholdPolicy:
    """Per-class exterior distance thresholds in meters."""

    default_tau: float
    overrides: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.default_tau >= 0:
            raise ValidationError("default threshold must be >= 0")
        for k, v in self.overrides.items():
            if not v >= 0:
                raise ValidationError(f"threshold for class {k} must be >= 0")

    def tau(self, class_id: int) -> float:
        return float(self.overrides.get(class_id, self.default_tau))

    def updated(self, overrides: dict) -> "ThresholdPolicy":
        merged = dict(self.overrides)
        merged.update(overrides)
        return ThresholdPolicy(self.default_tau, merged)


def gold_policy() -> ThresholdPolicy:
    g = GOLD.index
    return ThresholdPolicy(0.04, {g("Door"): 0.10, g("Furniture"): 0.10, g("Window"): 0.10})


def silver_policy() -> ThresholdPolicy:
    s = SILVER.index
    return ThresholdPolicy(0.04, {s("Door"): 0.10, s("Window"): 0.15})


def default_policy(taxonomy: Taxonomy) -> ThresholdPolicy:
    return gold_policy() if taxonomy is GOLD else silver_policy()


@dataclass
class ObjectTiming:
    object_id: int
    name: str
    class_id: int
    seconds: float
    candidates: int
    claimed: int = 0


@dataclass
class LabelReport:
    taxonomy: Taxonomy
    objects: list
    class_counts: np.ndarray
    unclaimed: int
    nonfinite: int
    seconds: float

    def per_class_seconds(self) -> dict:
        out = {}
        for o in self.objects:
            name = self.taxonomy.names[o.class_id]
            out[name] = out.get(name, 0.0) + o.seconds
        return out

    def to_dict(self) -> dict:
        names = self.taxonomy.names
        return {
            "taxonomy": self.taxonomy.id,
            "seconds": self.seconds,
            "unclaimed_to_clutter": self.unclaimed,
            "nonfinite": self.nonfinite,
            "class_counts": {n: int(c) for n, c in zip(names, self.class_counts)},
            "objects": [
                {"object_id": o.object_id, "name": o.name, "class": names[o.class_id],
                 "seconds": o.seconds, "candidates": o.candidates, "claimed": o.claimed}
                for o in self.objects
            ],
        }

    def format_text(self) -> str:
        names = self.taxonomy.names
        lines = [f"object {o.object_id} class={names[o.class_id]!r} "
                 f"seconds={o.seconds:.6f} claimed={o.claimed}" for o in self.objects]
        return "\n".join(lines) + ("\n" if lines else "")


@contextlib.contextmanager
def worker_threads(n):
    """Temporarily set the numba worker pool size (None leaves it alone)."""
    if n is None:
        yield
        return
    n = max(1, min(int(n), numba.config.NUMBA_NUM_THREADS))
    prev = numba.get_num_threads()
    numba.set_num_threads(n)
    try:
        yield
    finally:
        numba.set_num_threads(prev)


def _check(cloud, scene):
    if cloud.taxonomy is not scene.taxonomy:
        raise TaxonomyMismatch(f"cloud is {cloud.taxonomy.id} but scene is {scene.taxonomy.id}")


def _finish(cloud, scene, best_o, nonfinite_mask):
    class_of = np.array([0] * len(scene), dtype=np.uint8)
    for o in scene.objects:
        class_of[o.object_id] = o.class_id
    clutter = scene.taxonomy.clutter_id
    labels = np.full(len(cloud), clutter, dtype=np.uint8)
    hit = best_o >= 0
    labels[hit] = class_of[best_o[hit]]
    return labels, int((~hit & ~nonfinite_mask).sum())


def pseudo_label(cloud: LabeledCloud, scene: SceneModel, policy: ThresholdPolicy,
                 threads=None, grid_cell=None):
    """Label every point; returns ``(cloud with pseudo labels, LabelReport)``."""
    _check(cloud, scene)
    t_start = time.perf_counter()
    pts = cloud.positions
    n = len(cloud)
    nonfinite = ~np.all(np.isfinite(pts), axis=1)
    if nonfinite.any():
        log.warning("%d points with non-finite coordinates labeled Clutter",
                    int(nonfinite.sum()))
    best_d = np.full(n, np.inf)
    best_o = np.full(n, -1, dtype=np.int64)
    timings = []
    with worker_threads(threads):
        grid = build_point_grid(pts, grid_cell)
        for obj in sorted(scene.objects, key=lambda o: o.object_id):
            t0 = time.perf_counter()
            tau = policy.tau(obj.class_id)
            cand = query_box(grid, dilate(obj.box, tau + CULL_PAD))
            if cand.size:
                ix = obj.index
                _kernels.label_object(pts, cand, obj.object_id, tau, *ix._kernel_args(),
                                      best_d, best_o)
            timings.append(ObjectTiming(obj.object_id, obj.name, obj.class_id,
                                        time.perf_counter() - t0, int(cand.size)))
    labels, unclaimed = _finish(cloud, scene, best_o, nonfinite)
    claimed = np.bincount(best_o[best_o >= 0], minlength=len(scene))
    for t in timings:
        t.claimed = int(claimed[t.object_id])
    counts = np.bincount(labels, minlength=len(scene.taxonomy)).astype(np.int64)
    report = LabelReport(scene.taxonomy, timings, counts, unclaimed, int(nonfinite.sum()),
                         time.perf_counter() - t_start)
    return cloud.with_pseudo(labels), report


def brute_force_label(cloud: LabeledCloud, scene: SceneModel,
                      policy: ThresholdPolicy) -> LabeledCloud:
    """Reference labeler: no culling, no hierarchy, every triangle of every
    object. Shares the candidate ordering with :func:`pseudo_label`."""
    _check(cloud, scene)
    pts = cloud.positions
    n = len(cloud)
    best_d = np.full(n, np.inf)
    best_o = np.full(n, -1, dtype=np.int64)
    for obj in scene.objects:
        ix = obj.index
        _kernels.label_object_linear(pts, obj.object_id, policy.tau(obj.class_id),
                                     ix.triangles, ix.closed, ix.face_normals,
                                     ix.edge_normals, ix.vertex_normals, best_d, best_o)
    nonfinite = ~np.all(np.isfinite(pts), axis=1)
    labels, _ = _finish(cloud, scene, best_o, nonfinite)
    return cloud.with_pseudo(labels)
