"""Brute-force homology ground truth via GF(2) linear algebra.

Everything here is deliberately independent of the production persistence
code: barcodes are recovered from persistent Betti numbers (ranks of
inclusion-induced maps on homology) evaluated at every pair of distinct
thresholds, with bar multiplicities by inclusion-exclusion. Sizes are
capped because cost grows fast; these routines exist to verify, not to
run in production paths.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .grid import Filtration, GridError, make_filtration

FOUR_CONNECTED = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=int)

BARCODE_ORACLE_MAX = 10
IMAGE_ORACLE_MAX = 8


class OracleSizeError(ValueError):
    """Grid exceeds the oracle's cost guard."""


@dataclass
class BooleanMatrix:
    """Dense GF(2) matrix; each row is an int bitset over columns."""

    n_cols: int
    rows: list[int]

    @classmethod
    def from_dense(cls, dense) -> "BooleanMatrix":
        arr = np.asarray(dense)
        if arr.ndim != 2:
            raise ValueError("expected a 2D array")
        rows = []
        for r in range(arr.shape[0]):
            bits = 0
            for c in range(arr.shape[1]):
                if arr[r, c] % 2:
                    bits |= 1 << c
            rows.append(bits)
        return cls(n_cols=arr.shape[1], rows=rows)


def _rank_of_vectors(vectors) -> int:
    """Rank of a set of GF(2) bitset vectors by Gaussian elimination."""
    pivots: dict[int, int] = {}
    rank = 0
    for v in vectors:
        while v:
            p = v.bit_length() - 1
            other = pivots.get(p)
            if other is None:
                pivots[p] = v
                rank += 1
                break
            v ^= other
    return rank


def gf2_rank(m: BooleanMatrix) -> int:
    """Rank of a BooleanMatrix over GF(2)."""
    return _rank_of_vectors(m.rows)


def _kernel_basis(columns: list[int], tags: list[int]) -> list[int]:
    """Kernel of the map sending basis vector j to columns[j].

    Returns kernel vectors expressed as bitsets over the tag space: the
    combination with column set J becomes XOR of (1 << tags[j]) for j in J.
    """
    pivots: dict[int, tuple[int, int]] = {}
    kernel = []
    for j, col in enumerate(columns):
        combo = 1 << tags[j]
        while col:
            p = col.bit_length() - 1
            hit = pivots.get(p)
            if hit is None:
                pivots[p] = (col, combo)
                break
            col ^= hit[0]
            combo ^= hit[1]
        if col == 0:
            kernel.append(combo)
    return kernel


class _ComplexAtThresholds:
    """Per-threshold cell membership and boundary columns of a filtration."""

    def __init__(self, filt: Filtration, thresholds: np.ndarray):
        self.filt = filt
        self.thresholds = thresholds
        self.n_vertices = filt.width * filt.height
        vv = filt.vertex_values.ravel()
        ev = filt.edge_values
        sv = filt.square_values
        ends = filt.edge_endpoints()
        self.edge_cols = [
            (1 << int(a)) | (1 << int(b)) for a, b in ends
        ]  # boundary of each edge in vertex space
        faces = filt.cells
        self.square_cols = []
        for s in range(faces.n_squares):
            gidx = faces.square_global(s)
            x, y = faces.cell_anchor(gidx)
            w = filt.width
            e_top = y * (w - 1) + x
            e_bottom = (y + 1) * (w - 1) + x
            e_left = faces.n_h_edges + y * w + x
            e_right = faces.n_h_edges + y * w + x + 1
            bits = 0
            for e in (e_top, e_bottom, e_left, e_right):
                bits ^= 1 << e
            self.square_cols.append(bits)

        self.vertex_in = [vv <= t for t in thresholds]
        self.edge_in = [ev <= t for t in thresholds]
        self.square_in = [sv <= t for t in thresholds]

    def vertex_mask_int(self, i: int) -> int:
        bits = 0
        for v in np.flatnonzero(self.vertex_in[i]):
            bits |= 1 << int(v)
        return bits

    def edge_boundaries(self, i: int) -> tuple[list[int], list[int]]:
        ids = [int(e) for e in np.flatnonzero(self.edge_in[i])]
        return [self.edge_cols[e] for e in ids], ids

    def square_boundaries(self, i: int) -> list[int]:
        return [
            self.square_cols[int(s)] for s in np.flatnonzero(self.square_in[i])
        ]


def _check_dominance(comparison: Filtration, target: Filtration) -> None:
    if comparison.vertex_values.shape != target.vertex_values.shape:
        raise GridError("comparison and target must share the grid shape")
    if np.any(comparison.vertex_values < target.vertex_values):
        raise GridError(
            "comparison must dominate target pointwise on vertices"
        )


def _image_rank_tables(comparison: Filtration, target: Filtration):
    """r_p(s, t) = rank of H_p(C_s) -> H_p(T_t) for all threshold pairs."""
    thresholds = np.unique(
        np.concatenate(
            [comparison.vertex_values.ravel(), target.vertex_values.ravel()]
        )
    )
    n = len(thresholds)
    comp = _ComplexAtThresholds(comparison, thresholds)
    targ = _ComplexAtThresholds(target, thresholds)

    # target-side boundary columns and their ranks, cached per threshold
    targ_edge_cols = [targ.edge_boundaries(t)[0] for t in range(n)]
    targ_edge_rank = [_rank_of_vectors(cols) for cols in targ_edge_cols]
    targ_square_cols = [targ.square_boundaries(t) for t in range(n)]
    targ_square_rank = [_rank_of_vectors(cols) for cols in targ_square_cols]

    # comparison-side cycle data per threshold
    comp_vertex_masks = [comp.vertex_mask_int(s) for s in range(n)]
    comp_vertex_counts = [int(comp.vertex_in[s].sum()) for s in range(n)]
    comp_cycle_bases = []
    for s in range(n):
        cols, ids = comp.edge_boundaries(s)
        comp_cycle_bases.append(_kernel_basis(cols, ids))

    r0 = np.zeros((n, n), dtype=np.int64)
    r1 = np.zeros((n, n), dtype=np.int64)
    for s in range(n):
        vmask = comp_vertex_masks[s]
        inv = ~vmask
        z1 = comp_cycle_bases[s]
        for t in range(s, n):
            masked = [c & inv for c in targ_edge_cols[t]]
            r0[s, t] = (
                comp_vertex_counts[s]
                + _rank_of_vectors(masked)
                - targ_edge_rank[t]
            )
            r1[s, t] = (
                _rank_of_vectors(z1 + targ_square_cols[t])
                - targ_square_rank[t]
            )
    return thresholds, {0: r0, 1: r1}


def _bars_from_ranks(thresholds: np.ndarray, rank: np.ndarray, dim: int):
    """Recover bars from persistent Betti numbers by inclusion-exclusion.

    mu(b, d) = r(b, d-) - r(b-, d-) - r(b, d) + r(b-, d) with x- the
    previous distinct threshold; essential classes get death 1.
    """
    from .persistence import Bar

    n = len(thresholds)
    bars = []

    def r(i: int, j: int) -> int:
        if i < 0 or j < 0:
            return 0
        return int(rank[i, j])

    for i in range(n):
        for j in range(i + 1, n):
            mu = r(i, j - 1) - r(i - 1, j - 1) - r(i, j) + r(i - 1, j)
            for _ in range(mu):
                bars.append(
                    Bar(
                        dim=dim,
                        birth=float(thresholds[i]),
                        death=float(thresholds[j]),
                    )
                )
        ess = r(i, n - 1) - r(i - 1, n - 1)
        for _ in range(ess):
            if thresholds[i] < 1.0:
                bars.append(
                    Bar(dim=dim, birth=float(thresholds[i]), death=1.0)
                )
    bars.sort(key=lambda b: (b.birth, b.death))
    return bars


def image_barcode_oracle(comparison: Filtration, target: Filtration):
    """Image-persistence barcode from GF(2) ranks of composite maps."""
    from .persistence import Barcode

    _check_dominance(comparison, target)
    if max(comparison.width, comparison.height) > IMAGE_ORACLE_MAX:
        raise OracleSizeError(
            f"image oracle capped at {IMAGE_ORACLE_MAX}x{IMAGE_ORACLE_MAX}"
        )
    thresholds, ranks = _image_rank_tables(comparison, target)
    bars = []
    for dim in (0, 1):
        bars.extend(_bars_from_ranks(thresholds, ranks[dim], dim))
    return Barcode(bars=bars)


def barcode_oracle(filt: Filtration):
    """Ordinary persistence barcode via the rank-function oracle."""
    from .persistence import Barcode

    if max(filt.width, filt.height) > BARCODE_ORACLE_MAX:
        raise OracleSizeError(
            f"barcode oracle capped at {BARCODE_ORACLE_MAX}x{BARCODE_ORACLE_MAX}"
        )
    thresholds, ranks = _image_rank_tables(filt, filt)
    bars = []
    for dim in (0, 1):
        bars.extend(_bars_from_ranks(thresholds, ranks[dim], dim))
    return Barcode(bars=bars)


def persistent_betti_oracle(
    comparison: Filtration, target: Filtration, dim: int, birth_t: float, death_t: float
) -> int:
    """rank of H_dim(C_s) -> H_dim(T_t) at given threshold values."""
    _check_dominance(comparison, target)
    thresholds, ranks = _image_rank_tables(comparison, target)
    s = int(np.searchsorted(thresholds, birth_t, side="right")) - 1
    t = int(np.searchsorted(thresholds, death_t, side="right")) - 1
    if s < 0 or t < s:
        return 0
    return int(ranks[dim][s, t])


def homology_ranks(mask) -> tuple[int, int]:
    """(beta0, beta1) of a binary mask's cubical set, two independent ways.

    The GF(2) rank path (beta0 = #vertices - rank d1,
    beta1 = dim ker d1 - rank d2) is cross-checked against 4-connected
    component labeling plus the Euler characteristic; disagreement raises.
    """
    arr = np.asarray(mask)
    if arr.ndim != 2:
        raise GridError("mask must be 2D")
    if not np.all(np.isin(arr, (0, 1))):
        raise GridError("mask must be binary with values in {0, 1}")
    if arr.size == 0:
        return (0, 0)
    if not arr.any():
        return (0, 0)

    filt = make_filtration(1.0 - arr.astype(np.float64))
    comp = _ComplexAtThresholds(filt, np.array([0.0]))
    n_v = int(comp.vertex_in[0].sum())
    edge_cols, edge_ids = comp.edge_boundaries(0)
    square_cols = comp.square_boundaries(0)
    rank_d1 = _rank_of_vectors(edge_cols)
    rank_d2 = _rank_of_vectors(square_cols)
    beta0 = n_v - rank_d1
    beta1 = (len(edge_ids) - rank_d1) - rank_d2

    # independent path: component labeling + Euler characteristic
    _, n_components = ndimage.label(arr, structure=FOUR_CONNECTED)
    euler = n_v - len(edge_ids) + len(square_cols)
    beta1_euler = n_components - euler
    if (beta0, beta1) != (n_components, beta1_euler):
        raise AssertionError(
            f"oracle paths disagree: ranks give ({beta0}, {beta1}), "
            f"labeling/Euler give ({n_components}, {beta1_euler})"
        )
    return beta0, beta1
