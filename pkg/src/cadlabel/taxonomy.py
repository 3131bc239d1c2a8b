"""Gold (18) and Silver (12) class registries and Gold -> Silver simplification."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import TaxonomyMismatch, UnlabeledPoint, LabelOutOfRange

UNLABELED = 255

GOLD_NAMES = (
    "Column", "Components", "Covering", "Damper", "Door", "Exit sign",
    "Fire terminal", "Furniture", "Heater", "Lamp", "Outlet", "Railing",
    "Slab", "Stair", "Switch", "Wall", "Window", "Clutter",
)
SILVER_NAMES = (
    "Column", "Covering", "Door", "Exit sign", "Heater", "Lamp", "Railing",
    "Slab", "Stair", "Wall", "Window", "Clutter",
)


def _key(name):
    return "".join(name.lower().split())


@dataclass(frozen=True)
class Taxonomy:
    id: str
    code: int
    names: tuple

    @property
    def clutter_id(self) -> int:
        return len(self.names) - 1

    def __len__(self):
        return len(self.names)

    def index(self, name: str) -> int:
        """Class index by name; case and whitespace insensitive
        (``"FireTerminal"`` finds ``"Fire terminal"``)."""
        k = _key(name)
        for i, n in enumerate(self.names):
            if _key(n) == k:
                return i
        raise KeyError(name)


GOLD = Taxonomy("Gold", 0, GOLD_NAMES)
SILVER = Taxonomy("Silver", 1, SILVER_NAMES)


def gold() -> Taxonomy:
    return GOLD


def silver() -> Taxonomy:
    return SILVER


def by_id(name) -> Taxonomy:
    if isinstance(name, Taxonomy):
        return name
    for t in (GOLD, SILVER):
        if str(name).lower() == t.id.lower():
            return t
    raise KeyError(f"unknown taxonomy {name!r}")


def by_code(code: int) -> Taxonomy:
    for t in (GOLD, SILVER):
        if t.code == code:
            return t
    raise KeyError(code)


@dataclass(frozen=True)
class NearestOf:
    candidates: tuple


def _rules():
    s = SILVER.index
    fixed = {n: s(n) for n in SILVER_NAMES}
    rules = {}
    for name in GOLD_NAMES:
        if name in fixed:
            rules[name] = fixed[name]
    rules["Outlet"] = s("Wall")
    rules["Switch"] = s("Wall")
    rules["Components"] = s("Clutter")
    rules["Furniture"] = s("Clutter")
    rules["Damper"] = NearestOf((s("Covering"), s("Clutter")))
    rules["Fire terminal"] = NearestOf((s("Wall"), s("Clutter")))
    return tuple(rules[n] for n in GOLD_NAMES)


# indexed by Gold class id: a Silver id or a NearestOf rule
SIMPLIFY_RULES = _rules()
FIXED_REMAP = np.array([r if isinstance(r, int) else UNLABELED
                        for r in SIMPLIFY_RULES], dtype=np.uint8)


def simplify_column(positions, labels) -> np.ndarray:
    """Map one fully labeled Gold label column to Silver ids.

    Damper and Fire terminal points take whichever candidate class has the
    closer already-remapped point; equal distances (including two empty
    candidate classes) go to Clutter.
    """
    labels = np.asarray(labels)
    if np.any(labels == UNLABELED):
        raise UnlabeledPoint(f"{int((labels == UNLABELED).sum())} points are unlabeled")
    if labels.size and labels.max() >= len(GOLD):
        raise LabelOutOfRange(f"Gold label {int(labels.max())} out of range")
    out = FIXED_REMAP[labels]
    pending = out == UNLABELED
    if not pending.any():
        return out
    positions = np.asarray(positions, dtype=np.float64)
    fixed_out = out.copy()
    clutter = SILVER.clutter_id
    trees = {}
    for gid, rule in enumerate(SIMPLIFY_RULES):
        if isinstance(rule, int):
            continue
        sel = np.flatnonzero(labels == gid)
        if sel.size == 0:
            continue
        dists = []
        for c in rule.candidates:
            if c not in trees:
                pts = positions[fixed_out == c]
                trees[c] = cKDTree(pts) if len(pts) else None
            tree = trees[c]
            if tree is None:
                dists.append(np.full(sel.size, np.inf))
            else:
                dists.append(tree.query(positions[sel], k=1)[0])
        d = np.vstack(dists)
        best = np.argmin(d, axis=0)
        winner = np.asarray(rule.candidates, dtype=np.uint8)[best]
        # a tie anywhere against the minimum resolves to Clutter
        tie = (d == d.min(axis=0)).sum(axis=0) > 1
        winner[tie] = clutter
        out[sel] = winner
    return out


def simplify_labels(cloud, which=("real", "pseudo")):
    """Return a Silver copy of a Gold cloud.

    Columns named in ``which`` are remapped (each must be fully labeled);
    the others become UNLABELED since Gold ids mean nothing in Silver.
    """
    from .cloud import LabeledCloud

    if cloud.taxonomy is not GOLD:
        raise TaxonomyMismatch(f"expected a Gold cloud, got {cloud.taxonomy.id}")
    if isinstance(which, str):
        which = (which,)
    cols = {}
    for col in ("real", "pseudo"):
        src = getattr(cloud, col + "_label")
        if col in which:
            cols[col] = simplify_column(cloud.positions, src)
        else:
            cols[col] = np.full(len(cloud), UNLABELED, np.uint8)
    return LabeledCloud(cloud.positions, cloud.colors, cloud.intensity,
                        cols["real"], cols["pseudo"], SILVER, cloud.scan_id)
