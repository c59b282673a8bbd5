"""Likelihood grids, label grids, and cubical filtrations.

The cubical grid complex uses the V-construction: vertices are pixels,
edges join horizontal/vertical 4-neighbors, and squares fill 2x2 vertex
blocks. A cell's filtration value is the maximum over its vertices
(lower-star rule), so values are monotone under face inclusion.

Cells carry a fixed deterministic global index used for all tie-breaking:
vertices first, then horizontal edges, then vertical edges, then squares,
each block in row-major order by anchor vertex.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

SIMPLEX_TOL = 1e-4

CELL_VERTEX = 0
CELL_H_EDGE = 1
CELL_V_EDGE = 2
CELL_SQUARE = 3

_KIND_NAMES = {
    CELL_VERTEX: "vertex",
    CELL_H_EDGE: "h_edge",
    CELL_V_EDGE: "v_edge",
    CELL_SQUARE: "square",
}


class GridError(ValueError):
    """Invalid grid data or incompatible shapes."""


def _as_float_grid(values) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 2:
        raise GridError(f"expected a 2D grid, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise GridError(f"grid must be at least 1x1, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class LikelihoodGrid:
    """Per-pixel class likelihoods on an HxW grid, values in [0, 1]."""

    values: np.ndarray

    def __post_init__(self):
        arr = _as_float_grid(self.values)
        if not np.all(np.isfinite(arr)):
            raise GridError("likelihoods must be finite")
        if arr.min() < 0.0 or arr.max() > 1.0:
            raise GridError(
                f"likelihoods must lie in [0, 1], got range "
                f"[{arr.min()}, {arr.max()}]"
            )
        object.__setattr__(self, "values", arr)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class MulticlassPrediction:
    """Class-major (N, H, W) likelihoods summing to 1 per pixel."""

    values: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float64)
        if arr.ndim != 3:
            raise GridError(f"expected (N, H, W) values, got shape {arr.shape}")
        if arr.shape[0] < 2:
            raise GridError("a multi-class prediction needs at least 2 classes")
        if arr.shape[1] < 1 or arr.shape[2] < 1:
            raise GridError(f"grid must be at least 1x1, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise GridError("likelihoods must be finite")
        if arr.min() < 0.0 or arr.max() > 1.0:
            raise GridError("likelihoods must lie in [0, 1]")
        sums = arr.sum(axis=0)
        dev = np.abs(sums - 1.0)
        if dev.max() > SIMPLEX_TOL:
            y, x = np.unravel_index(int(dev.argmax()), dev.shape)
            raise GridError(
                f"per-pixel channel sums must be within {SIMPLEX_TOL} of 1; "
                f"worst pixel (x={x}, y={y}) sums to {sums[y, x]!r}"
            )
        object.__setattr__(self, "values", arr)

    @property
    def num_classes(self) -> int:
        return self.values.shape[0]

    @property
    def height(self) -> int:
        return self.values.shape[1]

    @property
    def width(self) -> int:
        return self.values.shape[2]


@dataclass(frozen=True)
class LabelGrid:
    """Dense integer class ids on an HxW grid."""

    labels: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.labels)
        if arr.ndim != 2:
            raise GridError(f"expected a 2D label grid, got shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise GridError(f"grid must be at least 1x1, got shape {arr.shape}")
        if not np.issubdtype(arr.dtype, np.integer):
            if not np.all(np.equal(np.mod(arr, 1), 0)):
                raise GridError("labels must be integers")
        arr = arr.astype(np.int64)
        if arr.min() < 0:
            raise GridError("labels must be non-negative")
        object.__setattr__(self, "labels", arr)

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]


def channel_project(pred: MulticlassPrediction, c: int) -> LikelihoodGrid:
    """Restrict a multi-class prediction to its c-th channel."""
    if not 0 <= c < pred.num_classes:
        raise GridError(
            f"class id {c} out of range for {pred.num_classes} classes"
        )
    return LikelihoodGrid(pred.values[c])


def one_hot(labels: LabelGrid, num_classes: int) -> MulticlassPrediction:
    """Expand dense labels into mutually exclusive indicator channels."""
    if num_classes < 2:
        raise GridError("one_hot needs at least 2 classes")
    if labels.labels.max() >= num_classes:
        raise GridError(
            f"label {labels.labels.max()} out of range for "
            f"{num_classes} classes"
        )
    planes = np.zeros(
        (num_classes, labels.height, labels.width), dtype=np.float64
    )
    ys, xs = np.indices(labels.labels.shape)
    planes[labels.labels, ys, xs] = 1.0
    return MulticlassPrediction(planes)


@dataclass(frozen=True)
class CellIndex:
    """Deterministic global cell indexing for a WxH vertex grid.

    Layout: [vertices | horizontal edges | vertical edges | squares],
    each block row-major by anchor vertex. Edge-local indices run over
    horizontal edges first, matching the global order.
    """

    width: int
    height: int

    @property
    def n_vertices(self) -> int:
        return self.width * self.height

    @property
    def n_h_edges(self) -> int:
        return (self.width - 1) * self.height

    @property
    def n_v_edges(self) -> int:
        return self.width * (self.height - 1)

    @property
    def n_edges(self) -> int:
        return self.n_h_edges + self.n_v_edges

    @property
    def n_squares(self) -> int:
        return (self.width - 1) * (self.height - 1)

    @property
    def n_cells(self) -> int:
        return self.n_vertices + self.n_edges + self.n_squares

    def edge_global(self, local: int) -> int:
        return self.n_vertices + local

    def square_global(self, local: int) -> int:
        return self.n_vertices + self.n_edges + local

    def cell_kind(self, gidx: int) -> int:
        if gidx < 0 or gidx >= self.n_cells:
            raise GridError(f"cell index {gidx} out of range")
        if gidx < self.n_vertices:
            return CELL_VERTEX
        if gidx < self.n_vertices + self.n_h_edges:
            return CELL_H_EDGE
        if gidx < self.n_vertices + self.n_edges:
            return CELL_V_EDGE
        return CELL_SQUARE

    def cell_anchor(self, gidx: int) -> tuple[int, int]:
        """(x, y) of the cell's anchor (top-left) vertex."""
        kind = self.cell_kind(gidx)
        if kind == CELL_VERTEX:
            return gidx % self.width, gidx // self.width
        if kind == CELL_H_EDGE:
            local = gidx - self.n_vertices
            return local % (self.width - 1), local // (self.width - 1)
        if kind == CELL_V_EDGE:
            local = gidx - self.n_vertices - self.n_h_edges
            return local % self.width, local // self.width
        local = gidx - self.n_vertices - self.n_edges
        return local % (self.width - 1), local // (self.width - 1)

    def cell_vertices(self, gidx: int) -> tuple[int, ...]:
        """Flat vertex ids of the cell's vertices."""
        kind = self.cell_kind(gidx)
        x, y = self.cell_anchor(gidx)
        v = y * self.width + x
        if kind == CELL_VERTEX:
            return (v,)
        if kind == CELL_H_EDGE:
            return (v, v + 1)
        if kind == CELL_V_EDGE:
            return (v, v + self.width)
        return (v, v + 1, v + self.width, v + self.width + 1)

    def describe(self, gidx: int) -> dict:
        x, y = self.cell_anchor(gidx)
        return {
            "index": int(gidx),
            "kind": _KIND_NAMES[self.cell_kind(gidx)],
            "x": int(x),
            "y": int(y),
        }


@lru_cache(maxsize=64)
def _grid_tables(width: int, height: int):
    """Shape-dependent connectivity tables, cached per grid shape.

    Returns (edge_endpoints, edge_faces) where edge local index runs over
    horizontal then vertical edges. edge_faces holds the two incident
    faces of each edge in the planar dual; the unbounded outer face has
    id n_squares.
    """
    idx = CellIndex(width, height)
    w, h = width, height
    ends = np.empty((idx.n_edges, 2), dtype=np.int64)
    faces = np.empty((idx.n_edges, 2), dtype=np.int64)
    outer = idx.n_squares

    # horizontal edges: anchor (x, y), endpoints (x, y)-(x+1, y)
    if w > 1:
        ys, xs = np.mgrid[0:h, 0 : w - 1]
        base = ys * w + xs
        ends[: idx.n_h_edges, 0] = base.ravel()
        ends[: idx.n_h_edges, 1] = (base + 1).ravel()
        above = np.where(ys > 0, (ys - 1) * (w - 1) + xs, outer)
        below = np.where(ys < h - 1, ys * (w - 1) + xs, outer)
        faces[: idx.n_h_edges, 0] = above.ravel()
        faces[: idx.n_h_edges, 1] = below.ravel()

    # vertical edges: anchor (x, y), endpoints (x, y)-(x, y+1)
    if h > 1:
        ys, xs = np.mgrid[0 : h - 1, 0:w]
        base = ys * w + xs
        ends[idx.n_h_edges :, 0] = base.ravel()
        ends[idx.n_h_edges :, 1] = (base + w).ravel()
        left = np.where(xs > 0, ys * (w - 1) + xs - 1, outer)
        right = np.where(xs < w - 1, ys * (w - 1) + xs, outer)
        faces[idx.n_h_edges :, 0] = left.ravel()
        faces[idx.n_h_edges :, 1] = right.ravel()

    ends.setflags(write=False)
    faces.setflags(write=False)
    return ends, faces


@dataclass(frozen=True)
class Filtration:
    """Lower-star filtration of the cubical grid complex.

    vertex_values holds f per pixel; edge and square values are the
    maxima over their incident vertices.
    """

    vertex_values: np.ndarray
    _edge_values: np.ndarray = field(repr=False, compare=False)
    _square_values: np.ndarray = field(repr=False, compare=False)

    def __post_init__(self):
        arr = _as_float_grid(self.vertex_values)
        if not np.all(np.isfinite(arr)):
            raise GridError("filtration values must be finite")
        object.__setattr__(self, "vertex_values", arr)

    @property
    def height(self) -> int:
        return self.vertex_values.shape[0]

    @property
    def width(self) -> int:
        return self.vertex_values.shape[1]

    @property
    def cells(self) -> CellIndex:
        return CellIndex(self.width, self.height)

    @property
    def edge_values(self) -> np.ndarray:
        """Flat values for all edges, horizontal block first."""
        return self._edge_values

    @property
    def square_values(self) -> np.ndarray:
        return self._square_values

    def edge_endpoints(self) -> np.ndarray:
        return _grid_tables(self.width, self.height)[0]

    def edge_faces(self) -> np.ndarray:
        return _grid_tables(self.width, self.height)[1]

    def cell_value(self, gidx: int) -> float:
        idx = self.cells
        kind = idx.cell_kind(gidx)
        if kind == CELL_VERTEX:
            return float(self.vertex_values.ravel()[gidx])
        if kind in (CELL_H_EDGE, CELL_V_EDGE):
            return float(self._edge_values[gidx - idx.n_vertices])
        return float(self._square_values[gidx - idx.n_vertices - idx.n_edges])

    def realizing_vertex(self, gidx: int) -> int:
        """Flat pixel id of the vertex attaining the cell's value.

        Ties go to the smallest vertex index (deterministic cell order).
        """
        verts = self.cells.cell_vertices(gidx)
        flat = self.vertex_values.ravel()
        best = verts[0]
        for v in verts[1:]:
            if flat[v] > flat[best]:
                best = v
        return int(best)


def make_filtration(vertex_values: np.ndarray) -> Filtration:
    """Build a Filtration from raw per-pixel values (max rule for cofaces)."""
    f = _as_float_grid(vertex_values)
    h, w = f.shape
    if w > 1:
        h_edges = np.maximum(f[:, :-1], f[:, 1:]).ravel()
    else:
        h_edges = np.empty(0, dtype=np.float64)
    if h > 1:
        v_edges = np.maximum(f[:-1, :], f[1:, :]).ravel()
    else:
        v_edges = np.empty(0, dtype=np.float64)
    edges = np.concatenate([h_edges, v_edges])
    if w > 1 and h > 1:
        squares = np.maximum(
            np.maximum(f[:-1, :-1], f[:-1, 1:]),
            np.maximum(f[1:, :-1], f[1:, 1:]),
        ).ravel()
    else:
        squares = np.empty(0, dtype=np.float64)
    edges.setflags(write=False)
    squares.setflags(write=False)
    return Filtration(f, edges, squares)


def build_filtration(grid: LikelihoodGrid, flip: bool = False) -> Filtration:
    """Sublevel filtration of a likelihood grid.

    By default filters f = 1 - likelihood so high-likelihood (foreground)
    pixels are born first and binary masks produce bars with birth 0.
    With flip=True the likelihood itself is filtered.
    """
    f = grid.values if flip else 1.0 - grid.values
    return make_filtration(f)


def binary_mask_filtration(mask: np.ndarray) -> Filtration:
    """Filtration of a binary mask (foreground = 1, born at value 0)."""
    arr = np.asarray(mask)
    values = np.unique(arr)
    if not np.all(np.isin(values, (0, 1))):
        raise GridError("mask must be binary with values in {0, 1}")
    return build_filtration(LikelihoodGrid(arr.astype(np.float64)))
