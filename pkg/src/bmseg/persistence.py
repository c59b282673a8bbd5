"""Persistence barcodes of cubical filtrations, including image persistence.

Dimension 0 runs union-find with the elder rule. Dimension 1 is defined by
GF(2) boundary-matrix reduction restricted to edges and squares; a dual
union-find fast path (components of the complement, processed in
decreasing order) produces identical output and is used on large grids.

Image persistence of an inclusion of sublevel filtrations (comparison
dominating target pointwise) uses the same two engines with two value
functions: births are read from the comparison filtration, deaths from
the target filtration.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy import ndimage

from .grid import Filtration, GridError

# auto method switches dim-1 to the dual fast path above this vertex count
_AUTO_REDUCTION_LIMIT = 1600


@dataclass(frozen=True)
class Bar:
    """Persistence interval with critical-cell provenance.

    birth_cell/death_cell are global cell indices (see grid.CellIndex);
    birth_pixel/death_pixel are flat vertex ids realizing the endpoint
    values. Essential classes have death pinned to 1 and no death cell.
    Oracle-produced bars carry values only.
    """

    dim: int
    birth: float
    death: float
    birth_cell: int | None = None
    death_cell: int | None = None
    birth_pixel: int | None = None
    death_pixel: int | None = None

    @property
    def essential(self) -> bool:
        return self.death_cell is None and self.birth_cell is not None

    def endpoints(self) -> tuple[float, float]:
        return (self.birth, self.death)


def _bar_sort_key(b: Bar):
    return (
        b.dim,
        b.birth,
        b.death,
        -1 if b.birth_cell is None else b.birth_cell,
        -1 if b.death_cell is None else b.death_cell,
    )


@dataclass(frozen=True)
class Barcode:
    """Multiset of bars, grouped by dimension."""

    bars: list

    def in_dim(self, dim: int) -> list:
        return [b for b in self.bars if b.dim == dim]

    def betti_at(self, t: float, dim: int) -> int:
        return sum(1 for b in self.in_dim(dim) if b.birth <= t < b.death)

    def value_multiset(self, dim: int) -> list:
        return sorted(b.endpoints() for b in self.in_dim(dim))


@njit(cache=True)
def _dim0_pairs(order_kind, order_idx, vert_birth, edge_death, edge_u, edge_v):
    """Two-value union-find for dimension-0 (image) persistence pairs.

    Vertices arrive at their comparison value and create classes; edges
    merge target-connectivity components at their target value, killing
    the younger class (elder rule, ties by vertex index).
    """
    n = vert_birth.shape[0]
    parent = np.arange(n)
    size = np.ones(n, dtype=np.int64)
    has_class = np.zeros(n, dtype=np.bool_)
    class_birth = np.zeros(n, dtype=np.float64)
    class_vertex = np.full(n, -1, dtype=np.int64)

    bar_birth = np.empty(n, dtype=np.float64)
    bar_death = np.empty(n, dtype=np.float64)
    bar_bcell = np.empty(n, dtype=np.int64)
    bar_dcell = np.empty(n, dtype=np.int64)
    nb = 0

    for k in range(order_kind.shape[0]):
        idx = order_idx[k]
        if order_kind[k] == 0:
            r = idx
            while parent[r] != r:
                parent[r] = parent[parent[r]]
                r = parent[r]
            if not has_class[r]:
                has_class[r] = True
                class_birth[r] = vert_birth[idx]
                class_vertex[r] = idx
        else:
            ru = edge_u[idx]
            while parent[ru] != ru:
                parent[ru] = parent[parent[ru]]
                ru = parent[ru]
            rv = edge_v[idx]
            while parent[rv] != rv:
                parent[rv] = parent[parent[rv]]
                rv = parent[rv]
            if ru == rv:
                continue
            keep = False
            keep_birth = 0.0
            keep_vertex = -1
            if has_class[ru] and has_class[rv]:
                if class_birth[ru] < class_birth[rv] or (
                    class_birth[ru] == class_birth[rv]
                    and class_vertex[ru] < class_vertex[rv]
                ):
                    elder, younger = ru, rv
                else:
                    elder, younger = rv, ru
                d = edge_death[idx]
                if d > class_birth[younger]:
                    bar_birth[nb] = class_birth[younger]
                    bar_death[nb] = d
                    bar_bcell[nb] = class_vertex[younger]
                    bar_dcell[nb] = idx
                    nb += 1
                keep = True
                keep_birth = class_birth[elder]
                keep_vertex = class_vertex[elder]
            elif has_class[ru]:
                keep = True
                keep_birth = class_birth[ru]
                keep_vertex = class_vertex[ru]
            elif has_class[rv]:
                keep = True
                keep_birth = class_birth[rv]
                keep_vertex = class_vertex[rv]
            if size[ru] < size[rv]:
                ru, rv = rv, ru
            parent[rv] = ru
            size[ru] += size[rv]
            has_class[ru] = keep
            if keep:
                class_birth[ru] = keep_birth
                class_vertex[ru] = keep_vertex

    ess_birth = 1.0
    ess_vertex = -1
    n_roots = 0
    for i in range(n):
        if parent[i] == i:
            n_roots += 1
            if has_class[i]:
                ess_birth = class_birth[i]
                ess_vertex = class_vertex[i]
    return (
        bar_birth[:nb],
        bar_death[:nb],
        bar_bcell[:nb],
        bar_dcell[:nb],
        ess_birth,
        ess_vertex,
        n_roots,
    )


@njit(cache=True)
def _dim1_pairs_dual(
    order_kind, order_idx, sq_arrival, edge_merge, face_a, face_b, n_squares
):
    """Dual union-find for dimension-1 (image) persistence pairs.

    Works on complement components: nodes are squares plus the outer face,
    processed in the exact reverse of the refined filtration order
    (value, cell index). Squares arrive at their target value and create
    classes; dual edges (across grid edges) merge complement components
    at their comparison value. A merge of two classed components emits a
    bar (edge comparison value, class square value). The outer face
    carries an eternal class, so no essential dim-1 bars.
    """
    n = n_squares + 1
    outer = n_squares
    parent = np.arange(n)
    size = np.ones(n, dtype=np.int64)
    has_class = np.zeros(n, dtype=np.bool_)
    class_birth = np.zeros(n, dtype=np.float64)
    class_node = np.full(n, -1, dtype=np.int64)
    has_class[outer] = True
    class_birth[outer] = np.inf
    class_node[outer] = -1

    bar_birth = np.empty(n_squares + 1, dtype=np.float64)
    bar_death = np.empty(n_squares + 1, dtype=np.float64)
    bar_bcell = np.empty(n_squares + 1, dtype=np.int64)
    bar_dcell = np.empty(n_squares + 1, dtype=np.int64)
    nb = 0

    for k in range(order_kind.shape[0]):
        idx = order_idx[k]
        if order_kind[k] == 0:
            r = idx
            while parent[r] != r:
                parent[r] = parent[parent[r]]
                r = parent[r]
            if not has_class[r]:
                has_class[r] = True
                class_birth[r] = sq_arrival[idx]
                class_node[r] = idx
        else:
            a = face_a[idx]
            b = face_b[idx]
            if a == b:
                continue
            ra = a
            while parent[ra] != ra:
                parent[ra] = parent[parent[ra]]
                ra = parent[ra]
            rb = b
            while parent[rb] != rb:
                parent[rb] = parent[parent[rb]]
                rb = parent[rb]
            if ra == rb:
                continue
            keep = False
            keep_birth = 0.0
            keep_node = -1
            if has_class[ra] and has_class[rb]:
                # elder: larger arrival value, ties to the larger square
                # index, mirroring the reversed refined order (the outer
                # face, at +inf, is always eldest)
                if class_birth[ra] > class_birth[rb] or (
                    class_birth[ra] == class_birth[rb]
                    and class_node[ra] > class_node[rb]
                ):
                    elder, younger = ra, rb
                else:
                    elder, younger = rb, ra
                bth = edge_merge[idx]
                if bth < class_birth[younger]:
                    bar_birth[nb] = bth
                    bar_death[nb] = class_birth[younger]
                    bar_bcell[nb] = idx
                    bar_dcell[nb] = class_node[younger]
                    nb += 1
                keep = True
                keep_birth = class_birth[elder]
                keep_node = class_node[elder]
            elif has_class[ra]:
                keep = True
                keep_birth = class_birth[ra]
                keep_node = class_node[ra]
            elif has_class[rb]:
                keep = True
                keep_birth = class_birth[rb]
                keep_node = class_node[rb]
            if size[ra] < size[rb]:
                ra, rb = rb, ra
            parent[rb] = ra
            size[ra] += size[rb]
            has_class[ra] = keep
            if keep:
                class_birth[ra] = keep_birth
                class_node[ra] = keep_node
    return bar_birth[:nb], bar_death[:nb], bar_bcell[:nb], bar_dcell[:nb]


def _reduce_columns(col_bits: list, col_ids: list) -> dict:
    """Left-to-right GF(2) column reduction; returns pivot -> (bits, col id).

    col_bits are bitsets over row ranks; the pivot of a column is its
    highest set bit. Columns reducing to zero are dropped.
    """
    pivots: dict[int, tuple[int, int]] = {}
    for bits, cid in zip(col_bits, col_ids):
        while bits:
            p = bits.bit_length() - 1
            hit = pivots.get(p)
            if hit is None:
                pivots[p] = (bits, cid)
                break
            bits ^= hit[0]
    return pivots


def _order_cells(values: np.ndarray) -> np.ndarray:
    """Positions sorted by (value, cell index): the deterministic order."""
    return np.lexsort((np.arange(len(values)), values))


def _dim0_reduction(comp: Filtration, targ: Filtration):
    """Dimension-0 pairs by reduction of the vertex/edge boundary matrix."""
    vert_birth = comp.vertex_values.ravel()
    edge_death = targ.edge_values
    ends = comp.edge_endpoints()
    n_v = vert_birth.shape[0]

    row_order = _order_cells(vert_birth)
    rank_of_vertex = np.empty(n_v, dtype=np.int64)
    rank_of_vertex[row_order] = np.arange(n_v)

    col_order = _order_cells(edge_death)
    col_bits = []
    col_ids = []
    for e in col_order:
        u, v = ends[e]
        col_bits.append(
            (1 << int(rank_of_vertex[u])) | (1 << int(rank_of_vertex[v]))
        )
        col_ids.append(int(e))
    pivots = _reduce_columns(col_bits, col_ids)

    pairs = []
    paired = np.zeros(n_v, dtype=bool)
    for rank, (_, eid) in pivots.items():
        vtx = int(row_order[rank])
        paired[vtx] = True
        pairs.append((vtx, eid, float(vert_birth[vtx]), float(edge_death[eid])))
    unpaired = [int(v) for v in np.flatnonzero(~paired)]
    return pairs, unpaired


def _square_edge_boundary(filt: Filtration) -> np.ndarray:
    """Local edge ids of each square's four boundary edges, (S, 4)."""
    w, h = filt.width, filt.height
    cells = filt.cells
    n_sq = cells.n_squares
    out = np.empty((n_sq, 4), dtype=np.int64)
    if n_sq == 0:
        return out
    ys, xs = np.divmod(np.arange(n_sq), w - 1)
    out[:, 0] = ys * (w - 1) + xs  # top horizontal
    out[:, 1] = (ys + 1) * (w - 1) + xs  # bottom horizontal
    out[:, 2] = cells.n_h_edges + ys * w + xs  # left vertical
    out[:, 3] = cells.n_h_edges + ys * w + xs + 1  # right vertical
    return out


def _dim1_reduction(comp: Filtration, targ: Filtration):
    """Dimension-1 pairs by reduction of the edge/square boundary matrix."""
    edge_birth = comp.edge_values
    sq_death = targ.square_values
    n_e = edge_birth.shape[0]
    boundary = _square_edge_boundary(comp)

    row_order = _order_cells(edge_birth)
    rank_of_edge = np.empty(n_e, dtype=np.int64)
    rank_of_edge[row_order] = np.arange(n_e)

    col_order = _order_cells(sq_death)
    col_bits = []
    col_ids = []
    for s in col_order:
        bits = 0
        for e in boundary[s]:
            bits ^= 1 << int(rank_of_edge[e])
        col_bits.append(bits)
        col_ids.append(int(s))
    pivots = _reduce_columns(col_bits, col_ids)
    if len(pivots) != len(col_ids):
        raise AssertionError(
            "planar square boundaries must all reduce to nonzero columns"
        )

    pairs = []
    for rank, (_, sid) in pivots.items():
        eid = int(row_order[rank])
        pairs.append((eid, sid, float(edge_birth[eid]), float(sq_death[sid])))
    return pairs


def _fast_dim0(comp: Filtration, targ: Filtration):
    vert_birth = comp.vertex_values.ravel()
    edge_death = targ.edge_values
    ends = comp.edge_endpoints()
    n_v = vert_birth.shape[0]
    n_e = edge_death.shape[0]

    values = np.concatenate([vert_birth, edge_death])
    kind = np.concatenate(
        [np.zeros(n_v, dtype=np.int8), np.ones(n_e, dtype=np.int8)]
    )
    idx = np.concatenate([np.arange(n_v), np.arange(n_e)])
    order = np.lexsort((idx, kind, values))
    res = _dim0_pairs(
        kind[order],
        idx[order],
        vert_birth,
        edge_death,
        np.ascontiguousarray(ends[:, 0]),
        np.ascontiguousarray(ends[:, 1]),
    )
    births, deaths, bcells, dcells, ess_birth, ess_vertex, n_roots = res
    if n_roots != 1:
        raise AssertionError("grid complex must be connected at full level")
    return births, deaths, bcells, dcells, float(ess_birth), int(ess_vertex)


def _fast_dim1(comp: Filtration, targ: Filtration):
    sq_arrival = targ.square_values
    edge_merge = comp.edge_values
    faces = comp.edge_faces()
    n_s = sq_arrival.shape[0]
    n_e = edge_merge.shape[0]

    # reverse of the primal refined order: value descending, then square
    # arrivals before edge merges, then cell index descending
    values = np.concatenate([edge_merge, sq_arrival])
    kind = np.concatenate(
        [np.ones(n_e, dtype=np.int8), np.zeros(n_s, dtype=np.int8)]
    )
    idx = np.concatenate([np.arange(n_e), np.arange(n_s)])
    order = np.lexsort((-idx, kind, -values))
    return _dim1_pairs_dual(
        kind[order],
        idx[order],
        sq_arrival,
        edge_merge,
        np.ascontiguousarray(faces[:, 0]),
        np.ascontiguousarray(faces[:, 1]),
        n_s,
    )


def _barcode_impl(
    comp: Filtration, targ: Filtration, dims, method: str
) -> Barcode:
    if method not in ("auto", "fast", "reduction"):
        raise ValueError(f"unknown method {method!r}")
    cells = comp.cells
    n_v = cells.n_vertices
    bars: list[Bar] = []

    if 0 in dims:
        if method == "reduction":
            pairs, unpaired = _dim0_reduction(comp, targ)
            for vtx, eid, birth, death in pairs:
                if death > birth:
                    g_edge = cells.edge_global(eid)
                    bars.append(
                        Bar(
                            dim=0,
                            birth=birth,
                            death=death,
                            birth_cell=vtx,
                            death_cell=g_edge,
                            birth_pixel=vtx,
                            death_pixel=targ.realizing_vertex(g_edge),
                        )
                    )
            if len(unpaired) != 1:
                raise AssertionError(
                    "exactly one vertex must stay unpaired in dim 0"
                )
            ess_vertex = unpaired[0]
            ess_birth = float(comp.vertex_values.ravel()[ess_vertex])
        else:
            births, deaths, bcells, dcells, ess_birth, ess_vertex = _fast_dim0(
                comp, targ
            )
            for i in range(len(births)):
                g_edge = cells.edge_global(int(dcells[i]))
                bars.append(
                    Bar(
                        dim=0,
                        birth=float(births[i]),
                        death=float(deaths[i]),
                        birth_cell=int(bcells[i]),
                        death_cell=g_edge,
                        birth_pixel=int(bcells[i]),
                        death_pixel=targ.realizing_vertex(g_edge),
                    )
                )
        if ess_birth < 1.0:
            bars.append(
                Bar(
                    dim=0,
                    birth=ess_birth,
                    death=1.0,
                    birth_cell=int(ess_vertex),
                    death_cell=None,
                    birth_pixel=int(ess_vertex),
                    death_pixel=None,
                )
            )

    if 1 in dims and cells.n_squares > 0:
        use_reduction = method == "reduction" or (
            method == "auto" and n_v <= _AUTO_REDUCTION_LIMIT
        )
        if use_reduction:
            quads = [
                (eid, sid, birth, death)
                for eid, sid, birth, death in _dim1_reduction(comp, targ)
            ]
        else:
            births, deaths, bcells, dcells = _fast_dim1(comp, targ)
            quads = [
                (int(bcells[i]), int(dcells[i]), float(births[i]), float(deaths[i]))
                for i in range(len(births))
            ]
        for eid, sid, birth, death in quads:
            if death > birth:
                g_edge = cells.edge_global(eid)
                g_sq = cells.square_global(sid)
                bars.append(
                    Bar(
                        dim=1,
                        birth=birth,
                        death=death,
                        birth_cell=g_edge,
                        death_cell=g_sq,
                        birth_pixel=comp.realizing_vertex(g_edge),
                        death_pixel=targ.realizing_vertex(g_sq),
                    )
                )

    bars.sort(key=_bar_sort_key)
    return Barcode(bars=bars)


def compute_barcode(filt: Filtration, dims=(0, 1), method: str = "auto") -> Barcode:
    """Exact sublevel persistence barcode in dimensions 0 and/or 1.

    Ties are broken by the deterministic cell order. Essential classes get
    death 1; zero-length bars are discarded.
    """
    return _barcode_impl(filt, filt, tuple(dims), method)


def image_barcode(
    comparison: Filtration, target: Filtration, dims=(0, 1), method: str = "auto"
) -> Barcode:
    """Barcode of the image persistence module of an inclusion.

    Requires the comparison filtration to dominate the target pointwise on
    vertices, so comparison sublevel sets include into target sublevel
    sets. Image bars are born at comparison values and die at target
    values.
    """
    if comparison.vertex_values.shape != target.vertex_values.shape:
        raise GridError("comparison and target must share the grid shape")
    if np.any(comparison.vertex_values < target.vertex_values):
        raise GridError(
            "comparison must dominate target pointwise on vertices"
        )
    return _barcode_impl(comparison, target, tuple(dims), method)


def betti_numbers(mask) -> tuple[int, int]:
    """(beta0, beta1) of a binary mask's foreground cubical set.

    beta0 counts 4-connected foreground components; beta1 follows from the
    Euler characteristic of the V-construction complex.
    """
    arr = np.asarray(mask)
    if hasattr(mask, "values"):
        arr = np.asarray(mask.values)
    if arr.ndim != 2:
        raise GridError("mask must be a 2D grid")
    if not np.all(np.isin(arr, (0, 1))):
        raise GridError("mask must be binary with values in {0, 1}")
    fg = arr.astype(bool)
    if not fg.any():
        return (0, 0)
    _, beta0 = ndimage.label(
        fg, structure=np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]])
    )
    n_v = int(fg.sum())
    n_e = int(np.logical_and(fg[:, :-1], fg[:, 1:]).sum()) + int(
        np.logical_and(fg[:-1, :], fg[1:, :]).sum()
    )
    n_s = int(
        (fg[:-1, :-1] & fg[:-1, 1:] & fg[1:, :-1] & fg[1:, 1:]).sum()
    )
    euler = n_v - n_e + n_s
    return int(beta0), int(beta0 - euler)
