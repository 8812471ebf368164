"""BEV feature grids: metric window, coordinate transforms, sampling, refinement.

A grid covers a rectangular ground-plane window with H x W cells of C
channels each. Grid coordinates are (row, col) with integer coordinates at
cell centers: row 0 is centered half a cell above y_range.min, so the map
from world meters to fractional grid coordinates carries a -0.5 shift.
Rows follow y, columns follow x.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, ContractError


@dataclass(frozen=True)
class GridSpec:
    """Geometry of a BEV window: cell counts, channels, and metric extents."""

    height_cells: int
    width_cells: int
    channels: int
    x_range: tuple[float, float] = (-54.0, 54.0)
    y_range: tuple[float, float] = (-54.0, 54.0)

    def __post_init__(self) -> None:
        if self.height_cells <= 0 or self.width_cells <= 0 or self.channels <= 0:
            raise ConfigurationError("grid dimensions must be positive")
        if self.x_range[0] >= self.x_range[1] or self.y_range[0] >= self.y_range[1]:
            raise ConfigurationError("grid window must have positive extent")

    @property
    def cell_size_x(self) -> float:
        return (self.x_range[1] - self.x_range[0]) / self.width_cells

    @property
    def cell_size_y(self) -> float:
        return (self.y_range[1] - self.y_range[0]) / self.height_cells

    def contains(self, x: float, y: float) -> bool:
        """Whether a world point lies inside the window (boundaries inclusive)."""
        return (
            self.x_range[0] <= x <= self.x_range[1]
            and self.y_range[0] <= y <= self.y_range[1]
        )

    def same_window(self, other: "GridSpec") -> bool:
        return (
            self.height_cells == other.height_cells
            and self.width_cells == other.width_cells
            and self.x_range == other.x_range
            and self.y_range == other.y_range
        )


def default_spec(channels: int) -> GridSpec:
    """180x180 grid over [-54, 54]^2 m (0.6 m cells); the project default window."""
    return GridSpec(180, 180, channels)


@dataclass
class BevGrid:
    """Dense H x W x C feature map over a GridSpec window.

    `data` is float64 in memory (file storage rounds to float32, see formats).
    """

    spec: GridSpec
    data: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        expected = (self.spec.height_cells, self.spec.width_cells, self.spec.channels)
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.shape != expected:
            raise ConfigurationError(
                f"grid data shape {self.data.shape} does not match spec {expected}"
            )

    @classmethod
    def zeros(cls, spec: GridSpec) -> "BevGrid":
        return cls(spec, np.zeros((spec.height_cells, spec.width_cells, spec.channels)))

    def copy(self) -> "BevGrid":
        return BevGrid(self.spec, self.data.copy())

    def all_finite(self) -> bool:
        return bool(np.isfinite(self.data).all())


@dataclass(frozen=True)
class ContextWeights:
    """Weights of the global-context refinement block.

    value_proj is a C x C matrix applied per position; key_proj is a C vector
    producing the scalar attention logit of each position.
    """

    value_proj: np.ndarray
    key_proj: np.ndarray

    def validate(self, channels: int) -> None:
        if self.value_proj.shape != (channels, channels):
            raise ConfigurationError(
                f"value_proj shape {self.value_proj.shape} != ({channels}, {channels})"
            )
        if self.key_proj.shape != (channels,):
            raise ConfigurationError(
                f"key_proj shape {self.key_proj.shape} != ({channels},)"
            )


def world_to_grid(point: tuple[float, float], spec: GridSpec) -> tuple[float, float]:
    """Map world (x, y) meters to fractional (row, col) grid coordinates.

    Out-of-window points are allowed; the result then falls outside
    [0, H-1] x [0, W-1].
    """
    x, y = point
    row = (y - spec.y_range[0]) / spec.cell_size_y - 0.5
    col = (x - spec.x_range[0]) / spec.cell_size_x - 0.5
    return row, col


def grid_to_world(coord: tuple[float, float], spec: GridSpec) -> tuple[float, float]:
    """Inverse of world_to_grid: fractional (row, col) back to world (x, y)."""
    row, col = coord
    x = (col + 0.5) * spec.cell_size_x + spec.x_range[0]
    y = (row + 0.5) * spec.cell_size_y + spec.y_range[0]
    return x, y


def bilinear_sample(grid: BevGrid, coord: tuple[float, float]) -> np.ndarray:
    """Sample a C-vector at a fractional (row, col) by 4-cell bilinear blending.

    Coordinates are clamped to [0, H-1] x [0, W-1] first (border replicate),
    so any input is valid. Exact at integer coordinates.
    """
    h, w = grid.spec.height_cells, grid.spec.width_cells
    r = min(max(float(coord[0]), 0.0), float(h - 1))
    c = min(max(float(coord[1]), 0.0), float(w - 1))
    r0 = min(int(np.floor(r)), h - 2) if h > 1 else 0
    c0 = min(int(np.floor(c)), w - 2) if w > 1 else 0
    r1 = min(r0 + 1, h - 1)
    c1 = min(c0 + 1, w - 1)
    fr = r - r0
    fc = c - c0
    d = grid.data
    # Explicit 4-weight form; enhancement semantics depend on this exact
    # expression order, so keep it as a flat weighted sum.
    return (
        (1.0 - fr) * (1.0 - fc) * d[r0, c0]
        + (1.0 - fr) * fc * d[r0, c1]
        + fr * (1.0 - fc) * d[r1, c0]
        + fr * fc * d[r1, c1]
    )


def surrounding_cells(
    coord: tuple[float, float], spec: GridSpec
) -> list[tuple[int, int]]:
    """Integer cells around a fractional (row, col): the floor/floor+1 quadruple.

    Each cell is clamped into grid bounds, duplicates removed, and the result
    ordered row-major ascending. Exact-integer input still yields the full
    quadruple (before clamping), not a single cell.
    """
    h, w = spec.height_cells, spec.width_cells
    r0 = int(np.floor(coord[0]))
    c0 = int(np.floor(coord[1]))
    cells = []
    for r in (r0, r0 + 1):
        for c in (c0, c0 + 1):
            rc = (min(max(r, 0), h - 1), min(max(c, 0), w - 1))
            if rc not in cells:
                cells.append(rc)
    cells.sort()
    return cells


def global_context_refine(grid: BevGrid, weights: ContextWeights) -> BevGrid:
    """Add a softmax-attended global context vector to every grid position.

    Each position contributes a scalar attention logit (key_proj . feature);
    the softmax-weighted sum of value-projected features forms one context
    vector, broadcast-added to the whole map. Shape is preserved, and a zero
    value projection makes this the identity.
    """
    weights.validate(grid.spec.channels)
    flat = grid.data.reshape(-1, grid.spec.channels)
    logits = flat @ np.asarray(weights.key_proj, dtype=np.float64)
    logits = logits - logits.max()
    attn = np.exp(logits)
    attn /= attn.sum()
    pooled = attn @ flat
    context = np.asarray(weights.value_proj, dtype=np.float64) @ pooled
    return BevGrid(grid.spec, grid.data + context)


def add_at_cell(grid: BevGrid, cell: tuple[int, int], vec: np.ndarray) -> BevGrid:
    """Add a C-vector to one cell in place. Out-of-bounds cells are rejected."""
    r, c = cell
    h, w = grid.spec.height_cells, grid.spec.width_cells
    if not (0 <= r < h and 0 <= c < w):
        raise ContractError(f"cell {cell} outside {h}x{w} grid")
    vec = np.asarray(vec, dtype=np.float64)
    if vec.shape != (grid.spec.channels,):
        raise ContractError(
            f"vector length {vec.shape} does not match {grid.spec.channels} channels"
        )
    grid.data[r, c] += vec
    return grid
