"""Segmentation evaluation metrics over binary masks.

Per slice, a predicted mask is compared against ground truth with four
measures:

* true positive rate, TPR = TP / (TP + FN)
* true negative rate, TNR = TN / (TN + FP)
* Dice coefficient, DSC = 2 |G ∩ P| / (|G| + |P|)
* Hausdorff distance, HD = max(h(G, P), h(P, G)) with the directed distance
  h(A, B) = max over a in A of min over b in B of the Euclidean norm |a - b|,
  taken over foreground pixel coordinates in pixel units.

Ratios with a zero denominator and distances against an empty point set are
undefined and reported as None (never coerced to 0 or 1); summaries average
over the defined entries only and count skipped records.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .imaging import BinaryMask2D


@dataclass(frozen=True)
class ConfusionCounts:
    """Pixel tallies of a prediction against ground truth."""

    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


@dataclass(frozen=True)
class EvalRecord:
    """Per-slice metric values; None marks an undefined entry."""

    slice_id: str
    tpr: float | None
    tnr: float | None
    dsc: float | None
    hd: float | None


@dataclass(frozen=True)
class EvalSummary:
    """Dataset-level means: rates in percent, HD in pixels, 1 decimal each."""

    mean_tpr: float | None
    mean_tnr: float | None
    mean_dsc: float | None
    mean_hd: float | None
    n: int
    skipped: int


def _check_dims(gt: BinaryMask2D, pred: BinaryMask2D) -> None:
    if (gt.height, gt.width) != (pred.height, pred.width):
        raise ValueError(
            f"mask dimensions do not match: {gt.height}x{gt.width} vs "
            f"{pred.height}x{pred.width}"
        )


def confusion(gt: BinaryMask2D, pred: BinaryMask2D) -> ConfusionCounts:
    """Count TP/FP/TN/FN pixels between two masks of equal dimensions."""
    _check_dims(gt, pred)
    g = gt.labels.astype(bool)
    p = pred.labels.astype(bool)
    tp = int(np.count_nonzero(g & p))
    fp = int(np.count_nonzero(~g & p))
    fn = int(np.count_nonzero(g & ~p))
    tn = g.size - tp - fp - fn
    return ConfusionCounts(tp=tp, fp=fp, tn=tn, fn=fn)


def tpr(c: ConfusionCounts) -> float | None:
    """Sensitivity TP / (TP + FN); None when there is no foreground."""
    denom = c.tp + c.fn
    return c.tp / denom if denom else None


def tnr(c: ConfusionCounts) -> float | None:
    """Specificity TN / (TN + FP); None when there is no background."""
    denom = c.tn + c.fp
    return c.tn / denom if denom else None


def dsc(gt: BinaryMask2D, pred: BinaryMask2D) -> float | None:
    """Dice overlap 2|G ∩ P| / (|G| + |P|); None when both masks are empty."""
    _check_dims(gt, pred)
    g = gt.labels.astype(bool)
    p = pred.labels.astype(bool)
    denom = int(np.count_nonzero(g)) + int(np.count_nonzero(p))
    if denom == 0:
        return None
    return 2.0 * int(np.count_nonzero(g & p)) / denom


def foreground_points(mask: BinaryMask2D) -> np.ndarray:
    """(k, 2) array of (row, col) coordinates of foreground pixels."""
    return np.argwhere(mask.labels != 0)


def directed_hausdorff(a: np.ndarray, b: np.ndarray) -> float:
    """Exact directed distance max_a min_b |a - b| over two point sets.

    Points are rows of (k, 2) arrays; distances are Euclidean.  Evaluation
    is the full O(|A| * |B|) max-min, which is fine at slice scale.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.size == 0 or b.size == 0:
        raise ValueError("directed Hausdorff distance needs non-empty point sets")
    diff = a[:, None, :] - b[None, :, :]
    d = np.sqrt((diff * diff).sum(axis=2))
    return float(d.min(axis=1).max())


def hausdorff(gt: BinaryMask2D, pred: BinaryMask2D) -> float | None:
    """Symmetric Hausdorff distance between foreground pixel sets, in pixels.

    Both masks empty yields 0; exactly one empty yields None (a completely
    missed segmentation has no meaningful distance).  Pixel spacing is
    deliberately ignored.
    """
    _check_dims(gt, pred)
    a = foreground_points(gt)
    b = foreground_points(pred)
    if len(a) == 0 and len(b) == 0:
        return 0.0
    if len(a) == 0 or len(b) == 0:
        return None
    return max(directed_hausdorff(a, b), directed_hausdorff(b, a))


def evaluate_masks(slice_id: str, gt: BinaryMask2D, pred: BinaryMask2D) -> EvalRecord:
    """All four metrics for one ground-truth/prediction pair."""
    c = confusion(gt, pred)
    return EvalRecord(
        slice_id=slice_id,
        tpr=tpr(c),
        tnr=tnr(c),
        dsc=dsc(gt, pred),
        hd=hausdorff(gt, pred),
    )


def _mean_percent(values: list[float]) -> float | None:
    if not values:
        return None
    return round(100.0 * sum(values) / len(values), 1)


def summarize(records: Sequence[EvalRecord]) -> EvalSummary:
    """Arithmetic means over the defined entries of each metric.

    Rates are reported in percent and HD in pixels, each to one decimal.
    ``skipped`` counts records carrying at least one undefined entry.
    """
    if not records:
        raise ValueError("cannot summarize an empty record list")
    tprs = [r.tpr for r in records if r.tpr is not None]
    tnrs = [r.tnr for r in records if r.tnr is not None]
    dscs = [r.dsc for r in records if r.dsc is not None]
    hds = [r.hd for r in records if r.hd is not None]
    skipped = sum(
        1 for r in records if None in (r.tpr, r.tnr, r.dsc, r.hd)
    )
    return EvalSummary(
        mean_tpr=_mean_percent(tprs),
        mean_tnr=_mean_percent(tnrs),
        mean_dsc=_mean_percent(dscs),
        mean_hd=round(sum(hds) / len(hds), 1) if hds else None,
        n=len(records),
        skipped=skipped,
    )


def _fmt(value: float | None, spec: str = ".6f") -> str:
    return "NA" if value is None else format(value, spec)


def render_csv(records: Sequence[EvalRecord], summary: EvalSummary) -> str:
    """CSV report: one row per slice plus a trailing MEAN summary row.

    Per-slice rates and DSC are raw ratios, HD is in pixels; the MEAN row
    carries the summary values (percent / pixels, one decimal).  Undefined
    entries are written as NA.
    """
    lines = ["slice_id,tpr,tnr,dsc,hd_px"]
    for r in records:
        lines.append(
            f"{r.slice_id},{_fmt(r.tpr)},{_fmt(r.tnr)},{_fmt(r.dsc)},{_fmt(r.hd)}"
        )
    lines.append(
        "MEAN,"
        f"{_fmt(summary.mean_tpr, '.1f')},{_fmt(summary.mean_tnr, '.1f')},"
        f"{_fmt(summary.mean_dsc, '.1f')},{_fmt(summary.mean_hd, '.1f')}"
    )
    return "\n".join(lines) + "\n"
