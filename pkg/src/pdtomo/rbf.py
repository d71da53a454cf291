"""Compactly supported RBF parametrization of the level-set function."""

from __future__ import annotations

from dataclasses import dataclass, field
import math

import numpy as np
import scipy.sparse as sp
from scipy.spatial import cKDTree

from .core import Grid, pixel_centers


@dataclass(frozen=True)
class RbfConfig:
    spacing_factor: float = 5.0
    margin: int = 2
    eta: float = 2.0

    def __post_init__(self):
        if self.spacing_factor < 1:
            raise ValueError("spacing_factor must be >= 1")
        if self.margin < 0:
            raise ValueError("margin must be >= 0")
        if not self.eta > 0:
            raise ValueError("eta must be positive")


def wendland(r):
    """Wendland function ``(1 - r)_+^8 (32 r^3 + 25 r^2 + 8 r + 1)``."""
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise ValueError("wendland is defined for r >= 0")
    t = np.clip(1.0 - r, 0.0, None)
    out = t**8 * (((32.0 * r + 25.0) * r + 8.0) * r + 1.0)
    return out if out.ndim else float(out)


def _axis_nodes(lo, hi, n_pix, spacing_factor, margin):
    pitch = spacing_factor * (hi - lo) / n_pix
    n_in = math.ceil(n_pix / spacing_factor - 1e-12)
    n_tot = n_in + 2 * margin
    mid = 0.5 * (lo + hi)
    return mid + (np.arange(n_tot) - 0.5 * (n_tot - 1)) * pitch, pitch


def build_nodes(grid: Grid, cfg: RbfConfig = RbfConfig()):
    """Regular node lattice centered on the grid; returns ``(nodes, beta, shape)``.

    ``shape`` is ``(rows, cols)`` of the lattice; nodes are ordered row-major
    like pixels.
    """
    x0, x1, y0, y1 = grid.extent
    xs, px = _axis_nodes(x0, x1, grid.nx, cfg.spacing_factor, cfg.margin)
    ys, _ = _axis_nodes(y0, y1, grid.ny, cfg.spacing_factor, cfg.margin)
    X, Y = np.meshgrid(xs, ys)
    nodes = np.column_stack([X.ravel(), Y.ravel()])
    beta = 1.0 / (cfg.eta * px)
    return nodes, beta, (ys.size, xs.size)


def kernel_matrix(nodes, beta, grid: Grid) -> sp.csr_matrix:
    """Sparse ``A`` with ``a_ij = wendland(beta * |x_i - chi_j|)``."""
    nodes = np.atleast_2d(np.asarray(nodes, dtype=float))
    if nodes.size == 0:
        raise ValueError("no RBF nodes")
    centers = pixel_centers(grid)
    radius = 1.0 / beta
    D = cKDTree(centers).sparse_distance_matrix(cKDTree(nodes), radius, output_type="coo_matrix")
    A = sp.csr_matrix((wendland(beta * D.data), (D.row, D.col)), shape=(grid.size, len(nodes)))
    A.sum_duplicates()
    A.eliminate_zeros()
    return A


def initial_alpha(nodes, grid: Grid, radius_fraction: float = 0.2, amplitude: float = 1.0):
    """+amplitude on nodes near the domain center, -amplitude elsewhere."""
    if not 0 < radius_fraction < 1:
        raise ValueError("radius_fraction must lie in (0, 1)")
    nodes = np.asarray(nodes, dtype=float)
    cx, cy = grid.center
    d = np.hypot(nodes[:, 0] - cx, nodes[:, 1] - cy)
    return np.where(d <= radius_fraction * grid.width, amplitude, -amplitude).astype(float)


@dataclass
class LevelSetModel:
    """Fixed RBF nodes and width with mutable weights ``alpha``."""

    grid: Grid
    nodes: np.ndarray
    beta: float
    A: sp.csr_matrix
    alpha: np.ndarray
    lattice_shape: tuple = field(default=(0, 0))

    @classmethod
    def build(cls, grid: Grid, cfg: RbfConfig = RbfConfig(), radius_fraction=0.2, amplitude=1.0):
        nodes, beta, shape = build_nodes(grid, cfg)
        A = kernel_matrix(nodes, beta, grid)
        alpha = initial_alpha(nodes, grid, radius_fraction, amplitude)
        return cls(grid, nodes, beta, A, alpha, shape)

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    def phi(self, alpha=None) -> np.ndarray:
        return self.A @ (self.alpha if alpha is None else alpha)
