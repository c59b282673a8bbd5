"""Topology-faithful losses and metrics for multi-class segmentation."""

from .grid import (
    Filtration,
    GridError,
    LabelGrid,
    LikelihoodGrid,
    MulticlassPrediction,
    binary_mask_filtration,
    build_filtration,
    channel_project,
    make_filtration,
    one_hot,
)
from .losses import (
    LossConfig,
    LossReport,
    alpha_schedule,
    bm_loss,
    bm_loss_gradient,
    cldice_loss,
    dice_loss,
    hutopo_loss,
    soft_skeleton,
    total_loss,
)
from .matching import (
    BettiMatching,
    DiagramMatching,
    betti_match,
    compose_matching,
    wasserstein_match,
)
from .metrics import (
    MetricsReport,
    betti_matching_error,
    betti_number_error,
    binarize,
    cldice_score,
    dice_score,
    evaluate,
    selection_score,
)
from .persistence import Bar, Barcode, betti_numbers, compute_barcode, image_barcode

__all__ = [
    "BettiMatching",
    "DiagramMatching",
    "LossConfig",
    "LossReport",
    "MetricsReport",
    "alpha_schedule",
    "betti_match",
    "betti_matching_error",
    "betti_number_error",
    "binarize",
    "bm_loss",
    "bm_loss_gradient",
    "cldice_loss",
    "cldice_score",
    "compose_matching",
    "dice_loss",
    "dice_score",
    "evaluate",
    "hutopo_loss",
    "selection_score",
    "soft_skeleton",
    "total_loss",
    "wasserstein_match",
    "Bar",
    "Barcode",
    "Filtration",
    "GridError",
    "LabelGrid",
    "LikelihoodGrid",
    "MulticlassPrediction",
    "betti_numbers",
    "binary_mask_filtration",
    "build_filtration",
    "channel_project",
    "compute_barcode",
    "image_barcode",
    "make_filtration",
    "one_hot",
]
