"""Evaluation metrics: overlap scores, topological error counts, and the
model-selection score.

All metrics are reported per foreground class and as the unweighted mean
over foreground classes; the background channel never enters averages.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .grid import (
    GridError,
    LabelGrid,
    LikelihoodGrid,
    MulticlassPrediction,
    binary_mask_filtration,
)
from .losses import soft_skeleton
from .matching import betti_match
from .persistence import betti_numbers

_METRIC_KEYS = ("dice", "cldice", "bm_error", "b0_error", "b1_error", "selection_score")


@dataclass(frozen=True)
class MetricsReport:
    """Per-foreground-class metric values plus their unweighted mean."""

    num_classes: int
    per_class: list
    macro: dict

    def to_dict(self) -> dict:
        return {
            "num_classes": self.num_classes,
            "per_class": self.per_class,
            "macro": self.macro,
        }


def binarize(pred: MulticlassPrediction) -> LabelGrid:
    """Per-pixel argmax over channels; ties go to the lowest class id."""
    return LabelGrid(np.argmax(pred.values, axis=0))


def _require_binary(mask) -> np.ndarray:
    arr = np.asarray(mask)
    if arr.ndim != 2:
        raise GridError("mask must be 2D")
    if not np.all(np.isin(arr, (0, 1))):
        raise GridError("mask must be binary with values in {0, 1}")
    return arr.astype(np.float64)


def betti_matching_error(pred_mask, gt_mask, method: str = "auto") -> int:
    """Unmatched bars of prediction plus ground truth, dims 0 and 1."""
    p = _require_binary(pred_mask)
    g = _require_binary(gt_mask)
    matching = betti_match(
        binary_mask_filtration(p), binary_mask_filtration(g), method=method
    )
    return matching.unmatched_total()


def betti_number_error(pred_mask, gt_mask, dim: int) -> int:
    """Absolute Betti number difference in one dimension."""
    if dim not in (0, 1):
        raise GridError("dim must be 0 or 1")
    bp = betti_numbers(_require_binary(pred_mask).astype(int))
    bg = betti_numbers(_require_binary(gt_mask).astype(int))
    return abs(bp[dim] - bg[dim])


def dice_score(pred_mask, gt_mask) -> float:
    """Overlap Dice of two binary masks; 1.0 when both are empty."""
    p = _require_binary(pred_mask)
    g = _require_binary(gt_mask)
    sp, sg = p.sum(), g.sum()
    if sp == 0 and sg == 0:
        return 1.0
    return float(2.0 * (p * g).sum() / (sp + sg))


def metric_skeleton_iterations(shape: tuple[int, int]) -> int:
    return math.ceil(max(shape) / 2)


def cldice_score(pred_mask, gt_mask) -> float:
    """Centerline Dice of two binary masks with fully eroded skeletons.

    Convention: 1.0 when both masks are empty, 0.0 when exactly one is.
    """
    p = _require_binary(pred_mask)
    g = _require_binary(gt_mask)
    if p.shape != g.shape:
        raise GridError("masks must share a shape")
    p_empty, g_empty = p.sum() == 0, g.sum() == 0
    if p_empty and g_empty:
        return 1.0
    if p_empty or g_empty:
        return 0.0
    k = metric_skeleton_iterations(p.shape)
    sp = soft_skeleton(LikelihoodGrid(p), k).values
    sg = soft_skeleton(LikelihoodGrid(g), k).values
    tprec = (sp * g).sum() / sp.sum()
    tsens = (sg * p).sum() / sg.sum()
    if tprec + tsens == 0.0:
        return 0.0
    return float(2.0 * tprec * tsens / (tprec + tsens))


def selection_score(dice: float, l_bm: float, gt_betti_sum: int) -> float:
    """Balanced pixel/topology score: dice + (1 - min(1, l_bm / betti sum)).

    With no ground-truth topology to normalize by, the second term is 1
    exactly when the topological error is 0.
    """
    if gt_betti_sum < 0:
        raise GridError("gt_betti_sum must be >= 0")
    if gt_betti_sum == 0:
        return dice + (1.0 if l_bm == 0 else 0.0)
    return dice + (1.0 - min(1.0, l_bm / gt_betti_sum))


def evaluate(
    pred: MulticlassPrediction, gt: LabelGrid, method: str = "auto"
) -> MetricsReport:
    """All metrics per foreground class plus their unweighted macro mean."""
    if (pred.height, pred.width) != (gt.height, gt.width):
        raise GridError("prediction and ground truth shapes disagree")
    if gt.labels.max() >= pred.num_classes:
        raise GridError("ground-truth label out of range of the prediction")
    pred_labels = binarize(pred).labels
    per_class = []
    for c in range(1, pred.num_classes):
        p_mask = (pred_labels == c).astype(int)
        g_mask = (gt.labels == c).astype(int)
        degenerate = p_mask.sum() == 0 and g_mask.sum() == 0
        bm = betti_matching_error(p_mask, g_mask, method=method)
        b0 = betti_number_error(p_mask, g_mask, 0)
        b1 = betti_number_error(p_mask, g_mask, 1)
        dice = dice_score(p_mask, g_mask)
        cldice = cldice_score(p_mask, g_mask)
        gt_b0, gt_b1 = betti_numbers(g_mask)
        entry = {
            "class": int(c),
            "dice": dice,
            "cldice": cldice,
            "bm_error": int(bm),
            "b0_error": int(b0),
            "b1_error": int(b1),
            "gt_betti_sum": int(gt_b0 + gt_b1),
            "selection_score": selection_score(dice, bm, gt_b0 + gt_b1),
            "degenerate": bool(degenerate),
        }
        per_class.append(entry)
    macro = {
        key: float(np.mean([e[key] for e in per_class])) for key in _METRIC_KEYS
    }
    return MetricsReport(
        num_classes=pred.num_classes, per_class=per_class, macro=macro
    )
