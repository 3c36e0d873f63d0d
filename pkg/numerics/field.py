# numerics/field.py

import logging
import math
from dataclasses import dataclass
from enum import IntEnum
from pathlib import Path
from typing import Callable, Optional, Tuple, Union

import numpy as np
import pandas as pd
from scipy.ndimage import map_coordinates

from core.exceptions import GridTooCoarseError, OutsideHullError
from numerics.geometry import ConvexDomain, max_distance

logger = logging.getLogger(__name__)

PAD_CELLS = 2


class NodeKind(IntEnum):
    EXTERIOR = 0
    INTERIOR = 1
    BOUNDARY_ADJACENT = 2


@dataclass(frozen=True, eq=False)
class Grid:
    """Uniform lattice x = origin + h*(i, j); arrays are indexed [i, j]"""

    origin: Tuple[float, float]
    h: float
    nx: int
    ny: int
    kind: np.ndarray

    def __post_init__(self):
        if not self.h > 0:
            raise ValueError("grid spacing must be positive")
        if self.kind.shape != (self.nx, self.ny):
            raise ValueError(f"mask shape {self.kind.shape} does not match ({self.nx}, {self.ny})")

    @property
    def xs(self) -> np.ndarray:
        return self.origin[0] + self.h * np.arange(self.nx)

    @property
    def ys(self) -> np.ndarray:
        return self.origin[1] + self.h * np.arange(self.ny)

    @property
    def mesh(self) -> Tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.xs, self.ys, indexing="ij")

    @property
    def inside(self) -> np.ndarray:
        return self.kind != NodeKind.EXTERIOR

    @property
    def interior(self) -> np.ndarray:
        return self.kind == NodeKind.INTERIOR

    @property
    def boundary_adjacent(self) -> np.ndarray:
        return self.kind == NodeKind.BOUNDARY_ADJACENT

    @property
    def full_stencil(self) -> np.ndarray:
        """Inside nodes whose 3x3 block is inside; derivative stencils there read no extension values"""
        padded = np.pad(self.inside, 1, constant_values=False)
        block = np.ones(self.inside.shape, dtype=bool)
        for di in (0, 1, 2):
            for dj in (0, 1, 2):
                block &= padded[di:di + self.nx, dj:dj + self.ny]
        return block

    @property
    def n_inside(self) -> int:
        return int(self.inside.sum())

    def points(self, mask: Optional[np.ndarray] = None) -> np.ndarray:
        """Coordinates (N, 2) of the nodes selected by mask (inside nodes by default)"""
        mask = self.inside if mask is None else mask
        X, Y = self.mesh
        return np.column_stack([X[mask], Y[mask]])

    def point(self, i: int, j: int) -> np.ndarray:
        return np.array([self.origin[0] + self.h * i, self.origin[1] + self.h * j])

    def fractional_index(self, pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        idx = (pts - np.asarray(self.origin)) / self.h
        snapped = np.round(idx)
        return np.where(np.abs(idx - snapped) < 1e-9, snapped, idx)

    def nearest_node(self, x) -> Tuple[int, int]:
        i, j = np.round(self.fractional_index(x)[0]).astype(int)
        return int(np.clip(i, 0, self.nx - 1)), int(np.clip(j, 0, self.ny - 1))

    def in_hull(self, pts) -> np.ndarray:
        idx = self.fractional_index(pts)
        return (
            (idx[:, 0] >= 0) & (idx[:, 0] <= self.nx - 1)
            & (idx[:, 1] >= 0) & (idx[:, 1] <= self.ny - 1)
        )

    def rescaled(self, factor: float) -> "Grid":
        return Grid(
            origin=(self.origin[0] * factor, self.origin[1] * factor),
            h=self.h * factor,
            nx=self.nx,
            ny=self.ny,
            kind=self.kind.copy(),
        )


def classify(inside: np.ndarray) -> np.ndarray:
    """Node kinds from an inside mask: inside nodes with an exterior 4-neighbour are boundary-adjacent"""
    padded = np.pad(inside, 1, constant_values=False)
    all_neighbours = (
        padded[2:, 1:-1] & padded[:-2, 1:-1] & padded[1:-1, 2:] & padded[1:-1, :-2]
    )
    kind = np.full(inside.shape, NodeKind.EXTERIOR, dtype=np.int8)
    kind[inside & all_neighbours] = NodeKind.INTERIOR
    kind[inside & ~all_neighbours] = NodeKind.BOUNDARY_ADJACENT
    return kind


def rasterize(dom: ConvexDomain, h: float) -> Grid:
    """Grid covering the bounding box with PAD_CELLS of exterior margin"""
    if not h > 0:
        raise ValueError("grid spacing must be positive")
    inradius = max_distance(dom)
    if h > inradius / 2.0:
        raise GridTooCoarseError(f"grid too coarse: h={h:g} exceeds inradius/2={inradius / 2.0:g}")

    x0, y0, x1, y1 = dom.bounding_box
    nx = int(math.ceil((x1 - x0) / h - 1e-9)) + 1 + 2 * PAD_CELLS
    ny = int(math.ceil((y1 - y0) / h - 1e-9)) + 1 + 2 * PAD_CELLS
    origin = (x0 - PAD_CELLS * h, y0 - PAD_CELLS * h)

    xs = origin[0] + h * np.arange(nx)
    ys = origin[1] + h * np.arange(ny)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    depth = dom.depth(np.column_stack([X.ravel(), Y.ravel()])).reshape(nx, ny)
    inside = depth > 1e-12 * dom.scale

    if not inside.any():
        raise GridTooCoarseError(f"grid too coarse: no node of spacing {h:g} lies inside {dom.describe()}")

    grid = Grid(origin=origin, h=float(h), nx=nx, ny=ny, kind=classify(inside))
    logger.debug(f"Rasterized {dom.describe()} at h={h:g}: {nx}x{ny} nodes, {grid.n_inside} inside")
    return grid


@dataclass(frozen=True, eq=False)
class ScalarField:
    grid: Grid
    values: np.ndarray
    boundary_value: float = 0.0

    def __post_init__(self):
        vals = np.array(self.values, dtype=float, copy=True)
        if vals.shape != (self.grid.nx, self.grid.ny):
            raise ValueError(f"values shape {vals.shape} does not match grid")
        vals[~self.grid.inside] = self.boundary_value
        if not np.all(np.isfinite(vals[self.grid.inside])):
            raise ValueError("field values must be finite at inside nodes")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_function(
        cls,
        grid: Grid,
        fn: Callable[[np.ndarray], np.ndarray],
        boundary_value: float = 0.0
    ) -> "ScalarField":
        """Sample fn on inside nodes; fn maps an (N, 2) array of points to N values"""
        values = np.full((grid.nx, grid.ny), boundary_value, dtype=float)
        values[grid.inside] = np.asarray(fn(grid.points()), dtype=float)
        return cls(grid, values, boundary_value)

    def with_values(self, values: np.ndarray) -> "ScalarField":
        return ScalarField(self.grid, values, self.boundary_value)

    def scaled(self, factor: float) -> "ScalarField":
        return ScalarField(self.grid, self.values * factor, self.boundary_value * factor)

    def inside_values(self, mask: Optional[np.ndarray] = None) -> np.ndarray:
        mask = self.grid.inside if mask is None else mask
        return self.values[mask]

    def max(self) -> float:
        return float(self.inside_values().max())

    def argmax_points(self, rel_tol: float = 0.0) -> np.ndarray:
        """Inside nodes where the value is within rel_tol*max of the maximum"""
        top = self.max()
        mask = self.grid.inside & (self.values >= top - rel_tol * abs(top))
        return self.grid.points(mask)

    def to_frame(self) -> pd.DataFrame:
        X, Y = self.grid.mesh
        I, J = np.meshgrid(np.arange(self.grid.nx), np.arange(self.grid.ny), indexing="ij")
        return pd.DataFrame({
            "i": I.ravel(),
            "j": J.ravel(),
            "x": X.ravel(),
            "y": Y.ravel(),
            "value": self.values.ravel(),
        })

    def to_csv(self, path: Union[str, Path]) -> None:
        self.to_frame().to_csv(path, index=False, float_format="%.12g")

    def to_pgm(self, path: Union[str, Path]) -> Path:
        return write_pgm(path, self.values)


@dataclass(frozen=True, eq=False)
class VectorField:
    grid: Grid
    components: np.ndarray

    def __post_init__(self):
        comps = np.array(self.components, dtype=float, copy=True)
        if comps.shape != (self.grid.nx, self.grid.ny, 2):
            raise ValueError(f"components shape {comps.shape} does not match grid")
        comps[~self.grid.inside] = 0.0
        comps.setflags(write=False)
        object.__setattr__(self, "components", comps)

    @property
    def x(self) -> np.ndarray:
        return self.components[..., 0]

    @property
    def y(self) -> np.ndarray:
        return self.components[..., 1]

    def norm(self) -> ScalarField:
        return ScalarField(self.grid, np.hypot(self.x, self.y))

    def at(self, x) -> np.ndarray:
        """Bilinear interpolation of both components"""
        gx = bilinear(self.grid, self.x, x)
        gy = bilinear(self.grid, self.y, x)
        if np.ndim(gx) == 0:
            return np.array([gx, gy])
        return np.column_stack([gx, gy])


def _shift(a: np.ndarray, k: int, axis: int) -> np.ndarray:
    return np.roll(a, -k, axis=axis)


def _diff(values: np.ndarray, inside: np.ndarray, h: float, axis: int) -> np.ndarray:
    """First derivative at inside nodes by central differences.

    Exterior neighbours carry the Dirichlet extension (the field's
    boundary_value), so boundary-adjacent nodes use the same stencil.
    """
    out = np.zeros_like(values, dtype=float)
    central = (_shift(values, 1, axis) - _shift(values, -1, axis)) / (2.0 * h)
    out[inside] = central[inside]
    return out


def _second_diff(values: np.ndarray, inside: np.ndarray, h: float, axis: int) -> np.ndarray:
    out = np.zeros_like(values, dtype=float)
    central = (_shift(values, 1, axis) - 2.0 * values + _shift(values, -1, axis)) / h ** 2
    out[inside] = central[inside]
    return out


def gradient(f: ScalarField) -> VectorField:
    g = f.grid
    gx = _diff(f.values, g.inside, g.h, axis=0)
    gy = _diff(f.values, g.inside, g.h, axis=1)
    return VectorField(g, np.stack([gx, gy], axis=-1))


def hessian(f: ScalarField) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(fxx, fxy, fyy) at inside nodes; exact on quadratics at grid.full_stencil nodes"""
    g = f.grid
    fxx = _second_diff(f.values, g.inside, g.h, axis=0)
    fyy = _second_diff(f.values, g.inside, g.h, axis=1)
    gx = _diff(f.values, g.inside, g.h, axis=0)
    fxy = _diff(gx, g.inside, g.h, axis=1)
    return fxx, fxy, fyy


def infinity_laplacian(f: ScalarField) -> ScalarField:
    """Hessian quadratic form applied to the gradient, nodewise"""
    grad = gradient(f)
    fxx, fxy, fyy = hessian(f)
    gx, gy = grad.x, grad.y
    lap = fxx * gx ** 2 + 2.0 * fxy * gx * gy + fyy * gy ** 2
    return ScalarField(f.grid, lap, 0.0)


def bilinear(grid: Grid, values: np.ndarray, x) -> Union[float, np.ndarray]:
    single = np.ndim(x) == 1
    pts = np.atleast_2d(np.asarray(x, dtype=float))
    if not np.all(grid.in_hull(pts)):
        bad = pts[~grid.in_hull(pts)][0]
        raise OutsideHullError(f"point {tuple(bad)} is outside the grid hull")
    idx = grid.fractional_index(pts)
    out = map_coordinates(values, [idx[:, 0], idx[:, 1]], order=1, mode="nearest")
    return float(out[0]) if single else out


def interpolate(f: ScalarField, x) -> Union[float, np.ndarray]:
    """Bilinear value at one point (2,) or at many points (N, 2)"""
    return bilinear(f.grid, f.values, x)


def circle_points(x, r: float, nsamples: int) -> np.ndarray:
    theta = 2.0 * np.pi * np.arange(nsamples) / nsamples
    return np.asarray(x, dtype=float) + r * np.column_stack([np.cos(theta), np.sin(theta)])


def sphere_max(f: ScalarField, x, r: float, nsamples: int = 64) -> Tuple[float, np.ndarray]:
    """Largest interpolated value over nsamples equi-angular points of the circle of radius r"""
    if nsamples < 16:
        raise ValueError("sphere_max needs at least 16 samples")
    pts = circle_points(x, r, nsamples)
    vals = interpolate(f, pts)
    k = int(np.argmax(vals))
    return float(vals[k]), pts[k]


def distance_field(dom: ConvexDomain, grid: Grid) -> ScalarField:
    return ScalarField.from_function(grid, lambda pts: np.maximum(dom.depth(pts), 0.0))


def sup_norm(f: ScalarField, mask: Optional[np.ndarray] = None) -> float:
    vals = f.inside_values(mask)
    return float(np.abs(vals).max()) if vals.size else 0.0


def lp_norm(f: ScalarField, p: float) -> float:
    vals = np.abs(f.inside_values())
    top = vals.max()
    if top == 0:
        return 0.0
    return float(top * (f.grid.h ** 2 * np.sum((vals / top) ** p)) ** (1.0 / p))


def write_pgm(path: Union[str, Path], array: np.ndarray) -> Path:
    """16-bit binary PGM (y up) with linear min-max scaling recorded in <path>.scale.txt"""
    path = Path(path)
    data = np.asarray(array, dtype=float)
    lo, hi = float(data.min()), float(data.max())
    span = hi - lo
    scaled = np.zeros_like(data) if span == 0 else (data - lo) / span * 65535.0
    image = np.round(scaled).astype(">u2").T[::-1]
    height, width = image.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{width} {height}\n65535\n".encode("ascii"))
        fh.write(np.ascontiguousarray(image).tobytes())
    sidecar = path.with_name(path.name + ".scale.txt")
    sidecar.write_text(f"min {lo:.12g}\nmax {hi:.12g}\n")
    return path
