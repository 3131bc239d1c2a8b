"""Confusion matrices and segmentation scores (IoU, mIoU, OA, AA)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyMatrix, LabelOutOfRange, LengthMismatch, ZeroTotal
from .taxonomy import UNLABELED


@dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    """Rows are reference classes, columns predicted classes."""

    counts: np.ndarray
    skipped: int = 0

    @property
    def k(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        return ConfusionMatrix(self.counts + other.counts, self.skipped + other.skipped)


@dataclass(frozen=True)
class MetricReport:
    iou: np.ndarray  # NaN where the class never occurs
    recall: np.ndarray
    miou: float
    oa: float
    aa: float

    def to_dict(self, names=None) -> dict:
        names = names or [str(i) for i in range(len(self.iou))]

        def clean(v):
            return None if np.isnan(v) else float(v)

        return {
            "miou": self.miou, "oa": self.oa, "aa": self.aa,
            "iou": {n: clean(v) for n, v in zip(names, self.iou)},
            "recall": {n: clean(v) for n, v in zip(names, self.recall)},
        }


def confusion(reference, predicted, k: int) -> ConfusionMatrix:
    """Count matrix; points whose reference is UNLABELED are skipped."""
    ref = np.asarray(reference).reshape(-1)
    pred = np.asarray(predicted).reshape(-1)
    if ref.size != pred.size:
        raise LengthMismatch(f"reference has {ref.size} labels, prediction {pred.size}")
    keep = ref != UNLABELED
    ref = ref[keep].astype(np.int64)
    pred = pred[keep].astype(np.int64)
    for name, arr in (("reference", ref), ("predicted", pred)):
        if arr.size and (arr.min() < 0 or arr.max() >= k):
            raise LabelOutOfRange(f"{name} label outside 0..{k - 1}")
    counts = np.bincount(ref * k + pred, minlength=k * k).reshape(k, k)
    return ConfusionMatrix(counts.astype(np.int64), int((~keep).sum()))


def report(m: ConfusionMatrix) -> MetricReport:
    c = m.counts.astype(np.float64)
    total = c.sum()
    if total == 0:
        raise EmptyMatrix("confusion matrix is empty")
    tp = np.diag(c)
    rows = c.sum(axis=1)
    cols = c.sum(axis=0)
    union = rows + cols - tp
    with np.errstate(invalid="ignore", divide="ignore"):
        iou = np.where(union > 0, tp / union, np.nan)
        recall = np.where(rows > 0, tp / rows, np.nan)
    return MetricReport(iou, recall, float(np.nanmean(iou)), float(tp.sum() / total),
                        float(np.nanmean(recall)))


def row_normalize(m, decimals=None) -> np.ndarray:
    """Rows as percentages; empty rows stay zero.

    With ``decimals`` the rows are rounded by largest remainder, so each
    non-empty row still sums to exactly 100 at that precision.
    """
    c = np.asarray(m.counts if isinstance(m, ConfusionMatrix) else m, dtype=np.float64)
    rows = c.sum(axis=1, keepdims=True)
    out = np.zeros_like(c)
    np.divide(100.0 * c, rows, out=out, where=rows > 0)
    if decimals is not None:
        out = round_rows(out, decimals)
    return out


def round_rows(rows, decimals: int = 1) -> np.ndarray:
    """Round percentage rows to ``decimals`` places keeping row sums.

    Each row is floored in units of ``10**-decimals``; the units still missing
    from its rounded total go to the cells with the largest remainders (ties
    to the lower column). All-zero rows stay zero.
    """
    rows = np.atleast_2d(np.asarray(rows, dtype=np.float64))
    scale = 10.0 ** decimals
    units = rows * scale
    base = np.floor(units)
    rem = units - base
    target = np.rint(units.sum(axis=1))
    missing = (target - base.sum(axis=1)).astype(np.int64)
    for i in range(rows.shape[0]):
        if missing[i] > 0:
            order = np.argsort(-rem[i], kind="stable")
            base[i, order[:missing[i]]] += 1
    return base / scale


def oa_from_normalized(rows, class_counts) -> float:
    """Overall accuracy from a row-normalized matrix and reference class sizes."""
    rows = np.asarray(rows, dtype=np.float64)
    counts = np.asarray(class_counts, dtype=np.float64)
    total = counts.sum()
    if total <= 0:
        raise ZeroTotal("class counts sum to zero")
    return float((counts * np.diag(rows)).sum() / (100.0 * total))


def format_table(rep: MetricReport, names) -> str:
    width = max(len(n) for n in names)
    lines = [f"{'class':<{width}}  {'IoU':>7}  {'recall':>7}"]
    for n, i, r in zip(names, rep.iou, rep.recall):
        fi = "    n/a" if np.isnan(i) else f"{100 * i:7.2f}"
        fr = "    n/a" if np.isnan(r) else f"{100 * r:7.2f}"
        lines.append(f"{n:<{width}}  {fi}  {fr}")
    lines.append(f"{'mIoU':<{width}}  {100 * rep.miou:7.2f}")
    lines.append(f"{'OA':<{width}}  {100 * rep.oa:7.2f}")
    lines.append(f"{'AA':<{width}}  {100 * rep.aa:7.2f}")
    return "\n".join(lines)


def format_matrix(rows: np.ndarray, names, decimals: int = 1) -> str:
    rows = round_rows(rows, decimals)
    abbr = [n[:8] for n in names]
    width = max(len(n) for n in names)
    cw = max(6, max(len(a) for a in abbr))
    head = " " * width + " " + " ".join(f"{a:>{cw}}" for a in abbr)
    body = [f"{n:<{width}} " + " ".join(f"{v:>{cw}.{decimals}f}" for v in row)
            for n, row in zip(names, rows)]
    return "\n".join([head] + body)
