"""Grids, images, sinograms and projection geometry.

Images are stored row-major with the row index running along y, so pixel
``k = i * nx + j`` sits at column ``j`` and row ``i``.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Tuple

import numpy as np


class Kernel(str, Enum):
    LINE = "line"
    JOSEPH = "joseph"

    @classmethod
    def parse(cls, value) -> "Kernel":
        if isinstance(value, Kernel):
            return value
        return cls(str(value).lower())


@dataclass(frozen=True)
class Grid:
    """Regular pixel grid over a rectangular extent ``(x0, x1, y0, y1)``."""

    nx: int
    ny: int
    extent: Tuple[float, float, float, float] = (0.0, 1.0, 0.0, 1.0)

    def __post_init__(self):
        if int(self.nx) < 1 or int(self.ny) < 1:
            raise ValueError(f"grid counts must be positive, got {self.nx}x{self.ny}")
        x0, x1, y0, y1 = (float(v) for v in self.extent)
        if not (x1 > x0 and y1 > y0):
            raise ValueError(f"degenerate extent {self.extent}")
        object.__setattr__(self, "nx", int(self.nx))
        object.__setattr__(self, "ny", int(self.ny))
        object.__setattr__(self, "extent", (x0, x1, y0, y1))

    @classmethod
    def square(cls, n: int, extent=(0.0, 1.0, 0.0, 1.0)) -> "Grid":
        return cls(n, n, extent)

    @property
    def dx(self) -> float:
        return (self.extent[1] - self.extent[0]) / self.nx

    @property
    def dy(self) -> float:
        return (self.extent[3] - self.extent[2]) / self.ny

    @property
    def size(self) -> int:
        return self.nx * self.ny

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.ny, self.nx)

    @property
    def center(self) -> Tuple[float, float]:
        x0, x1, y0, y1 = self.extent
        return (0.5 * (x0 + x1), 0.5 * (y0 + y1))

    @property
    def width(self) -> float:
        return self.extent[1] - self.extent[0]

    @property
    def diagonal(self) -> float:
        x0, x1, y0, y1 = self.extent
        return float(np.hypot(x1 - x0, y1 - y0))

    def shifted(self, ox: float, oy: float) -> "Grid":
        x0, x1, y0, y1 = self.extent
        return Grid(self.nx, self.ny, (x0 + ox, x1 + ox, y0 + oy, y1 + oy))


def pixel_centers(grid: Grid) -> np.ndarray:
    """Return the ``(nx*ny, 2)`` array of pixel centers in row-major order."""
    x0, _, y0, _ = grid.extent
    xs = x0 + (np.arange(grid.nx) + 0.5) * grid.dx
    ys = y0 + (np.arange(grid.ny) + 0.5) * grid.dy
    X, Y = np.meshgrid(xs, ys)
    return np.column_stack([X.ravel(), Y.ravel()])


def nearest_pixel(grid: Grid, points) -> np.ndarray:
    """Row-major index of the pixel containing each point (clamped to the grid)."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    x0, _, y0, _ = grid.extent
    j = np.clip(np.floor((pts[:, 0] - x0) / grid.dx).astype(int), 0, grid.nx - 1)
    i = np.clip(np.floor((pts[:, 1] - y0) / grid.dy).astype(int), 0, grid.ny - 1)
    return i * grid.nx + j


@dataclass(frozen=True, eq=False)
class Image:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float).ravel()
        if v.size != self.grid.size:
            raise ValueError(f"image has {v.size} values, grid needs {self.grid.size}")
        if not np.all(np.isfinite(v)):
            raise ValueError("image values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def zeros(cls, grid: Grid) -> "Image":
        return cls(grid, np.zeros(grid.size))

    @classmethod
    def from_function(cls, grid: Grid, fn) -> "Image":
        c = pixel_centers(grid)
        return cls(grid, fn(c[:, 0], c[:, 1]))

    def as_array(self) -> np.ndarray:
        return self.values.reshape(self.grid.shape)

    def _check(self, other: "Image"):
        if other.grid != self.grid:
            raise ValueError("images live on different grids")

    def __add__(self, other):
        if isinstance(other, Image):
            self._check(other)
            return Image(self.grid, self.values + other.values)
        return Image(self.grid, self.values + other)

    def __sub__(self, other):
        if isinstance(other, Image):
            self._check(other)
            return Image(self.grid, self.values - other.values)
        return Image(self.grid, self.values - other)

    def __mul__(self, other):
        # Hadamard product for images, scaling for scalars
        if isinstance(other, Image):
            self._check(other)
            return Image(self.grid, self.values * other.values)
        return Image(self.grid, self.values * other)

    __rmul__ = __mul__


@dataclass(frozen=True)
class ProjectionGeometry:
    """Parallel-beam sampling: one ray per (angle, detector) pair.

    Detector shifts are measured from the grid center along ``n(theta) =
    (cos theta, sin theta)``. ``detector_extent=None`` makes the detector
    span the grid diagonal.
    """

    angles: Tuple[float, ...]
    detectors: int
    detector_extent: float | None = None
    kernel: Kernel = Kernel.JOSEPH

    def __post_init__(self):
        angles = tuple(float(a) for a in np.atleast_1d(self.angles))
        if not angles:
            raise ValueError("geometry needs at least one angle")
        if int(self.detectors) < 1:
            raise ValueError("geometry needs at least one detector")
        if self.detector_extent is not None and not self.detector_extent > 0:
            raise ValueError("detector_extent must be positive")
        object.__setattr__(self, "angles", angles)
        object.__setattr__(self, "detectors", int(self.detectors))
        object.__setattr__(self, "kernel", Kernel.parse(self.kernel))

    @classmethod
    def uniform(cls, n_angles: int, detectors: int, arc: float = np.pi,
                detector_extent=None, kernel=Kernel.JOSEPH) -> "ProjectionGeometry":
        """``n_angles`` equispaced angles on ``[0, arc)``."""
        angles = np.arange(n_angles) * (arc / n_angles)
        return cls(tuple(angles), detectors, detector_extent, kernel)

    @property
    def n_rows(self) -> int:
        return len(self.angles) * self.detectors

    def with_kernel(self, kernel) -> "ProjectionGeometry":
        return ProjectionGeometry(self.angles, self.detectors, self.detector_extent, kernel)

    def span(self, grid: Grid) -> float:
        return grid.diagonal if self.detector_extent is None else float(self.detector_extent)

    def shifts(self, grid: Grid) -> np.ndarray:
        """Equispaced detector midpoints across the detector span."""
        span = self.span(grid)
        return (np.arange(self.detectors) + 0.5) * (span / self.detectors) - 0.5 * span


@dataclass(frozen=True, eq=False)
class Sinogram:
    geometry: ProjectionGeometry
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float).ravel()
        if v.size != self.geometry.n_rows:
            raise ValueError(f"sinogram has {v.size} values, geometry needs {self.geometry.n_rows}")
        if not np.all(np.isfinite(v)):
            raise ValueError("sinogram values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def as_array(self) -> np.ndarray:
        return self.values.reshape(len(self.geometry.angles), self.geometry.detectors)
