"""Differentiable topology-aware losses and their composition.

The combined objective is

    total = alpha * (gamma_m * l_m + gamma_u * l_u) + dice

with the matched/unmatched components of the induced-matching loss summed
over class channels, each channel treated as its own single-class task.
Gradients are routed analytically to the pixels realizing each bar's
critical cells; unmatched ground-truth bars contribute to the loss value
(flag-controlled) but never to gradients.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

import numpy as np
from scipy import ndimage

from .grid import (
    GridError,
    LabelGrid,
    LikelihoodGrid,
    MulticlassPrediction,
    build_filtration,
    channel_project,
    one_hot,
)
from .matching import BettiMatching, betti_match, wasserstein_match
from .persistence import Barcode

EPS = 1e-8

_CROSS = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)


class LossConfigError(ValueError):
    """Invalid loss configuration."""


@dataclass(frozen=True)
class LossConfig:
    """Weights and switches shared by the loss surface and the CLI."""

    alpha_max: float = 0.05
    warmup_alpha: int = 0
    total_steps: int = 1000
    gamma_matched: float = 1.0
    gamma_unmatched: float = 1.0
    cldice_alpha: float = 0.5
    skeleton_iterations: int = 10
    ignore_background: bool = False
    filtration_flip: bool = False
    # whether the (prediction-independent) unmatched ground-truth term is
    # included in the reported unmatched loss value
    include_unmatched_gt: bool = True

    def __post_init__(self):
        for name in (
            "alpha_max",
            "gamma_matched",
            "gamma_unmatched",
            "cldice_alpha",
        ):
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0:
                raise LossConfigError(f"{name} must be finite and >= 0, got {v}")
        if self.cldice_alpha > 1:
            raise LossConfigError("cldice_alpha must lie in [0, 1]")
        if self.warmup_alpha < 0:
            raise LossConfigError("warmup_alpha must be >= 0")
        if self.skeleton_iterations < 1:
            raise LossConfigError("skeleton_iterations must be >= 1")

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass(frozen=True)
class LossReport:
    """Loss values, per-class breakdown, and the analytic gradient grid."""

    total: float
    dice_component: float
    topo_matched: float
    topo_unmatched: float
    alpha: float
    per_class: list
    gradient: np.ndarray

    def to_dict(self) -> dict:
        return {
            "total": self.total,
            "dice_component": self.dice_component,
            "topo_matched": self.topo_matched,
            "topo_unmatched": self.topo_unmatched,
            "alpha": self.alpha,
            "per_class": self.per_class,
        }


def bm_loss(
    matching: BettiMatching, include_unmatched_gt: bool = True
) -> tuple[float, float]:
    """Matched and unmatched components of the induced-matching loss.

    Matched pairs pay squared endpoint differences; unmatched bars pay
    their squared distance to the diagonal. The ground-truth part of the
    unmatched term is constant with respect to the prediction.
    """
    l_m = 0.0
    l_u = 0.0
    for dim in matching.dims:
        for p, g in matching.matched[dim]:
            l_m += (p.birth - g.birth) ** 2 + (p.death - g.death) ** 2
        for b in matching.unmatched_pred[dim]:
            l_u += (b.death - b.birth) ** 2 / 2.0
        if include_unmatched_gt:
            for b in matching.unmatched_gt[dim]:
                l_u += (b.death - b.birth) ** 2 / 2.0
    return l_m, l_u


def bm_loss_gradient(
    matching: BettiMatching, config: LossConfig, shape=None
) -> np.ndarray:
    """Gradient of gamma_m * l_m + gamma_u * l_u w.r.t. channel likelihoods.

    Endpoint derivatives land on the pixel realizing the corresponding
    critical cell; with the default f = 1 - likelihood filtration the sign
    flips through the chain rule. Pixels critical for no bar get 0.
    """
    if shape is not None and tuple(shape) != (matching.height, matching.width):
        raise GridError(
            f"stale matching: grid shape {shape} does not match "
            f"({matching.height}, {matching.width})"
        )
    grad_f = np.zeros(matching.height * matching.width)
    gm = config.gamma_matched
    gu = config.gamma_unmatched
    for dim in matching.dims:
        for p, g in matching.matched[dim]:
            grad_f[p.birth_pixel] += gm * 2.0 * (p.birth - g.birth)
            if p.death_cell is not None:
                grad_f[p.death_pixel] += gm * 2.0 * (p.death - g.death)
        for b in matching.unmatched_pred[dim]:
            grad_f[b.birth_pixel] -= gu * (b.death - b.birth)
            if b.death_cell is not None:
                grad_f[b.death_pixel] += gu * (b.death - b.birth)
    if not config.filtration_flip:
        grad_f = -grad_f
    return grad_f.reshape(matching.height, matching.width)


def hutopo_loss(
    pred_bc: Barcode,
    gt_bc: Barcode,
    shape: tuple[int, int],
    dims=(0, 1),
    flip: bool = False,
) -> tuple[float, np.ndarray]:
    """Squared-distance diagram-matching loss with critical-cell gradients.

    The exact assignment matching may pair spatially unrelated features;
    it is kept as a baseline comparator.
    """
    dm = wasserstein_match(pred_bc, gt_bc, dims=dims)
    h, w = shape
    grad_f = np.zeros(h * w)
    for dim in dm.dims:
        for p, g in dm.matched[dim]:
            grad_f[p.birth_pixel] += 2.0 * (p.birth - g.birth)
            if p.death_cell is not None:
                grad_f[p.death_pixel] += 2.0 * (p.death - g.death)
        for b in dm.diagonal_pred[dim]:
            grad_f[b.birth_pixel] -= b.death - b.birth
            if b.death_cell is not None:
                grad_f[b.death_pixel] += b.death - b.birth
    if not flip:
        grad_f = -grad_f
    return dm.cost, grad_f.reshape(h, w)


def _erode(a: np.ndarray) -> np.ndarray:
    return ndimage.grey_erosion(a, footprint=_CROSS, mode="constant", cval=0.0)


def _dilate(a: np.ndarray) -> np.ndarray:
    return ndimage.grey_dilation(a, footprint=_CROSS, mode="constant", cval=0.0)


def soft_skeleton(grid: LikelihoodGrid, k: int) -> LikelihoodGrid:
    """Morphological soft skeleton: k rounds of cross-shaped min-erosion
    and max-dilation accumulating the opening residual.

    Out-of-bounds pixels count as background, so masks erode at the image
    border. The loop exits early once the eroded image is empty; further
    rounds contribute nothing.
    """
    if k < 1:
        raise LossConfigError("skeleton_iterations must be >= 1")
    img = grid.values
    skel = np.maximum(img - _dilate(_erode(img)), 0.0)
    for _ in range(k):
        img = _erode(img)
        if not img.any():
            break
        delta = np.maximum(img - _dilate(_erode(img)), 0.0)
        skel = skel + np.maximum(delta - skel * delta, 0.0)
    return LikelihoodGrid(np.clip(skel, 0.0, 1.0))


def cldice_loss(pred_c: LikelihoodGrid, gt_c: LikelihoodGrid, k: int) -> float:
    """Soft centerline-Dice loss for one channel against a binary mask."""
    if not np.all(np.isin(gt_c.values, (0.0, 1.0))):
        raise GridError("ground-truth channel must be binary")
    sp = soft_skeleton(pred_c, k).values
    sg = soft_skeleton(gt_c, k).values
    tprec = (sp * gt_c.values).sum() / (sp.sum() + EPS)
    tsens = (sg * pred_c.values).sum() / (sg.sum() + EPS)
    return 1.0 - 2.0 * tprec * tsens / (tprec + tsens + EPS)


def dice_loss(
    pred: MulticlassPrediction,
    gt: MulticlassPrediction,
    ignore_background: bool = False,
) -> tuple[float, np.ndarray]:
    """Generalized Dice loss with inverse squared-volume class weights.

    Returns (value, gradient) with the gradient taken w.r.t. the
    prediction likelihoods; excluded channels get zero gradient.
    """
    if pred.values.shape != gt.values.shape:
        raise GridError("prediction and ground truth shapes disagree")
    classes = range(1 if ignore_background else 0, pred.num_classes)
    numer = 0.0
    denom = 0.0
    weights = {}
    for c in classes:
        g = gt.values[c]
        p = pred.values[c]
        w = 1.0 / (g.sum() + EPS) ** 2
        weights[c] = w
        numer += w * float((p * g).sum())
        denom += w * float((p + g).sum())
    grad = np.zeros_like(pred.values)
    if denom <= 0.0:
        return 0.0, grad
    value = 1.0 - 2.0 * numer / denom
    for c in classes:
        w = weights[c]
        g = gt.values[c]
        grad[c] = -2.0 * (w * g * denom - numer * w) / denom**2
    return value, grad


def alpha_schedule(step: int, config: LossConfig) -> float:
    """Sigmoid ramp of the topological weight, zero through the warmup."""
    if config.total_steps <= 0:
        raise LossConfigError("total_steps must be positive")
    if step < config.warmup_alpha:
        return 0.0
    p = (step - config.warmup_alpha) / config.total_steps
    return (2.0 / (1.0 + math.exp(-10.0 * p)) - 1.0) * config.alpha_max


def total_loss(
    pred: MulticlassPrediction,
    gt: LabelGrid,
    step: int,
    config: LossConfig,
    dims=(0, 1),
    method: str = "auto",
) -> LossReport:
    """Combined loss of the alpha-weighted topological terms and Dice.

    The topological component sums per-channel matched/unmatched losses;
    with ignore_background set, channel 0 is excluded from both the
    topological sums and the Dice term.
    """
    if (pred.height, pred.width) != (gt.height, gt.width):
        raise GridError("prediction and ground truth shapes disagree")
    if gt.labels.max() >= pred.num_classes:
        raise GridError("ground-truth label out of range of the prediction")
    dims = tuple(dims)
    gt_onehot = one_hot(gt, pred.num_classes)
    alpha = alpha_schedule(step, config)

    classes = range(1 if config.ignore_background else 0, pred.num_classes)
    l_m = 0.0
    l_u = 0.0
    per_class = []
    topo_grad = np.zeros_like(pred.values)
    for c in classes:
        pred_c = channel_project(pred, c)
        gt_c = LikelihoodGrid(gt_onehot.values[c])
        filt_p = build_filtration(pred_c, flip=config.filtration_flip)
        filt_g = build_filtration(gt_c, flip=config.filtration_flip)
        matching = betti_match(filt_p, filt_g, dims=dims, method=method)
        lm_c, lu_c = bm_loss(matching, config.include_unmatched_gt)
        l_m += lm_c
        l_u += lu_c
        topo_grad[c] = bm_loss_gradient(
            matching, config, shape=(pred.height, pred.width)
        )
        per_class.append(
            {
                "class": int(c),
                "topo_matched": lm_c,
                "topo_unmatched": lu_c,
                "n_matched": matching.n_matched(),
                "n_unmatched_pred": matching.n_unmatched_pred(),
                "n_unmatched_gt": matching.n_unmatched_gt(),
            }
        )

    dice_value, dice_grad = dice_loss(pred, gt_onehot, config.ignore_background)
    total = (
        alpha * (config.gamma_matched * l_m + config.gamma_unmatched * l_u)
        + dice_value
    )
    gradient = alpha * topo_grad + dice_grad
    return LossReport(
        total=float(total),
        dice_component=float(dice_value),
        topo_matched=float(l_m),
        topo_unmatched=float(l_u),
        alpha=float(alpha),
        per_class=per_class,
        gradient=gradient,
    )
