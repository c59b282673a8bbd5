"""Induced (Betti) matchings between barcodes, and diagram matchings.

betti_match builds the comparison filtration as the pointwise maximum of
the two inputs, computes both image barcodes through it, and composes the
canonical injections (shared birth into the comparison barcode, shared
death into each input barcode) into a partial matching between the two
input barcodes.

wasserstein_match is the exact assignment-based diagram matching used by
the squared-distance baseline loss: unmatched points pay their squared
distance to the diagonal.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .grid import Filtration, GridError, make_filtration
from .persistence import Bar, Barcode, compute_barcode, image_barcode


class MatchingError(AssertionError):
    """Internal inconsistency while composing induced matchings."""


@dataclass(frozen=True)
class BettiMatching:
    """Matched pairs and unmatched bars between prediction and ground truth."""

    width: int
    height: int
    dims: tuple
    matched: dict
    unmatched_pred: dict
    unmatched_gt: dict

    def n_matched(self, dim=None) -> int:
        if dim is None:
            return sum(len(v) for v in self.matched.values())
        return len(self.matched.get(dim, []))

    def n_unmatched_pred(self, dim=None) -> int:
        if dim is None:
            return sum(len(v) for v in self.unmatched_pred.values())
        return len(self.unmatched_pred.get(dim, []))

    def n_unmatched_gt(self, dim=None) -> int:
        if dim is None:
            return sum(len(v) for v in self.unmatched_gt.values())
        return len(self.unmatched_gt.get(dim, []))

    def unmatched_total(self) -> int:
        return self.n_unmatched_pred() + self.n_unmatched_gt()


@dataclass(frozen=True)
class DiagramMatching:
    """Minimum-cost diagram matching with diagonal augmentation."""

    dims: tuple
    matched: dict
    diagonal_pred: dict
    diagonal_gt: dict
    cost: float


def _birth_side_links(comparison_bars, image_bars):
    """Canonical injection of image bars into comparison bars (shared birth).

    Within an equal-birth group both sides are ordered by death descending
    (then list position); the k-th image bar links to the k-th comparison
    bar. Returns image index -> comparison index.
    """
    slots = defaultdict(list)
    for j, bar in enumerate(comparison_bars):
        slots[bar.birth].append(j)
    for group in slots.values():
        group.sort(key=lambda j: (-comparison_bars[j].death, j))
    img = defaultdict(list)
    for i, bar in enumerate(image_bars):
        img[bar.birth].append(i)
    links = {}
    for birth, group in img.items():
        group.sort(key=lambda i: (-image_bars[i].death, i))
        slot_group = slots.get(birth, [])
        if len(group) > len(slot_group):
            raise MatchingError(
                f"{len(group)} image bars born at {birth} exceed "
                f"{len(slot_group)} comparison bars"
            )
        for k, i in enumerate(group):
            j = slot_group[k]
            if image_bars[i].death > comparison_bars[j].death:
                raise MatchingError(
                    "image bar outlives its comparison bar"
                )
            links[i] = j
    return links


def _death_side_links(target_bars, image_bars):
    """Canonical injection of image bars into one input barcode (shared death).

    Within an equal-death group both sides are ordered by birth ascending
    (then list position). Returns image index -> target bar index.
    """
    slots = defaultdict(list)
    for j, bar in enumerate(target_bars):
        slots[bar.death].append(j)
    for group in slots.values():
        group.sort(key=lambda j: (target_bars[j].birth, j))
    img = defaultdict(list)
    for i, bar in enumerate(image_bars):
        img[bar.death].append(i)
    links = {}
    for death, group in img.items():
        group.sort(key=lambda i: (image_bars[i].birth, i))
        slot_group = slots.get(death, [])
        if len(group) > len(slot_group):
            raise MatchingError(
                f"{len(group)} image bars dying at {death} exceed "
                f"{len(slot_group)} bars of the input barcode"
            )
        for k, i in enumerate(group):
            j = slot_group[k]
            if image_bars[i].birth < target_bars[j].birth:
                raise MatchingError(
                    "image bar born before its target bar"
                )
            links[i] = j
    return links


def compose_matching(
    comparison_bc: Barcode,
    pred_bc: Barcode,
    gt_bc: Barcode,
    image_pred_bc: Barcode,
    image_gt_bc: Barcode,
    dims=(0, 1),
):
    """Compose two induced matchings through the comparison barcode.

    A prediction bar matches a ground-truth bar exactly when their image
    bars link to the same comparison bar. Works on bar values plus stable
    list positions, so oracle barcodes (no cells) compose identically.
    Returns (matched, unmatched_pred, unmatched_gt) keyed by dimension.
    """
    matched = {}
    unmatched_pred = {}
    unmatched_gt = {}
    for dim in dims:
        comp = comparison_bc.in_dim(dim)
        pred = pred_bc.in_dim(dim)
        gt = gt_bc.in_dim(dim)
        img_p = image_pred_bc.in_dim(dim)
        img_g = image_gt_bc.in_dim(dim)

        p_slot = _birth_side_links(comp, img_p)
        g_slot = _birth_side_links(comp, img_g)
        p_bar = _death_side_links(pred, img_p)
        g_bar = _death_side_links(gt, img_g)

        slot_to_p = {slot: p_bar[i] for i, slot in p_slot.items()}
        slot_to_g = {slot: g_bar[i] for i, slot in g_slot.items()}

        pairs = []
        hit_p = set()
        hit_g = set()
        for slot in sorted(slot_to_p.keys() & slot_to_g.keys()):
            ip, ig = slot_to_p[slot], slot_to_g[slot]
            pairs.append((pred[ip], gt[ig]))
            hit_p.add(ip)
            hit_g.add(ig)
        matched[dim] = pairs
        unmatched_pred[dim] = [b for i, b in enumerate(pred) if i not in hit_p]
        unmatched_gt[dim] = [b for i, b in enumerate(gt) if i not in hit_g]
    return matched, unmatched_pred, unmatched_gt


def betti_match(
    pred: Filtration, gt: Filtration, dims=(0, 1), method: str = "auto"
) -> BettiMatching:
    """Induced matching between prediction and ground-truth barcodes.

    The comparison filtration is the pointwise maximum of the two vertex
    functions, whose sublevel sets include into both inputs.
    """
    if pred.vertex_values.shape != gt.vertex_values.shape:
        raise GridError("prediction and ground truth must share a grid shape")
    dims = tuple(dims)
    comparison = make_filtration(
        np.maximum(pred.vertex_values, gt.vertex_values)
    )
    pred_bc = compute_barcode(pred, dims=dims, method=method)
    gt_bc = compute_barcode(gt, dims=dims, method=method)
    comp_bc = compute_barcode(comparison, dims=dims, method=method)
    img_p = image_barcode(comparison, pred, dims=dims, method=method)
    img_g = image_barcode(comparison, gt, dims=dims, method=method)
    matched, un_p, un_g = compose_matching(
        comp_bc, pred_bc, gt_bc, img_p, img_g, dims=dims
    )
    return BettiMatching(
        width=pred.width,
        height=pred.height,
        dims=dims,
        matched=matched,
        unmatched_pred=un_p,
        unmatched_gt=un_g,
    )


def _diagonal_cost(bar: Bar) -> float:
    return (bar.death - bar.birth) ** 2 / 2.0


def _pair_cost(a: Bar, b: Bar) -> float:
    return (a.birth - b.birth) ** 2 + (a.death - b.death) ** 2


def wasserstein_match(
    pred_bc: Barcode, gt_bc: Barcode, dims=(0, 1)
) -> DiagramMatching:
    """Exact minimum-cost matching with squared costs per dimension.

    Points may match the diagonal at cost (death - birth)^2 / 2; the
    assignment over the diagonal-augmented bipartite graph is solved
    exactly.
    """
    dims = tuple(dims)
    matched = {}
    diag_p = {}
    diag_g = {}
    total = 0.0
    for dim in dims:
        p = pred_bc.in_dim(dim)
        g = gt_bc.in_dim(dim)
        m, n = len(p), len(g)
        if m == 0 and n == 0:
            matched[dim] = []
            diag_p[dim] = []
            diag_g[dim] = []
            continue
        pair = np.zeros((m, n))
        for i, a in enumerate(p):
            for j, b in enumerate(g):
                pair[i, j] = _pair_cost(a, b)
        dp = np.array([_diagonal_cost(b) for b in p])
        dg = np.array([_diagonal_cost(b) for b in g])
        # off-diagonal filler strictly above any useful alternative so the
        # solver never routes a point to a foreign diagonal slot
        big = float(dp.sum() + dg.sum() + (pair.max() if pair.size else 0.0) + 1.0)
        cost = np.full((m + n, m + n), big)
        cost[:m, :n] = pair
        cost[m:, n:] = 0.0
        for i in range(m):
            cost[i, n + i] = dp[i]
        for j in range(n):
            cost[m + j, j] = dg[j]
        rows, cols = linear_sum_assignment(cost)
        pairs = []
        on_diag_p = []
        on_diag_g = []
        for r, c in zip(rows, cols):
            if r < m and c < n:
                pairs.append((p[r], g[c]))
                total += pair[r, c]
            elif r < m:
                on_diag_p.append(p[r])
                total += dp[r]
            elif c < n:
                on_diag_g.append(g[c])
                total += dg[c]
        matched[dim] = pairs
        diag_p[dim] = on_diag_p
        diag_g[dim] = on_diag_g
    return DiagramMatching(
        dims=dims,
        matched=matched,
        diagonal_pred=diag_p,
        diagonal_gt=diag_g,
        cost=float(total),
    )
