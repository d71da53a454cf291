"""Assembled parallel-beam projection matrices (line and Joseph kernels)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .core import Grid, Image, Kernel, ProjectionGeometry, Sinogram

_TINY = 1e-12


def _ray_frames(theta, shifts, grid):
    """Base points and unit direction of the rays of one angle."""
    c, s = np.cos(theta), np.sin(theta)
    # snap round-off so axis-aligned rays stay axis-aligned
    c = 0.0 if abs(c) < _TINY else c
    s = 0.0 if abs(s) < _TINY else s
    cx, cy = grid.center
    bx = cx + shifts * c
    by = cy + shifts * s
    return bx, by, -s, c


def _line_rows(theta, shifts, grid):
    """Exact ray/pixel intersection lengths (Siddon-style) for one angle."""
    bx, by, dx_, dy_ = _ray_frames(theta, shifts, grid)
    x0, x1, y0, y1 = grid.extent
    xs = np.linspace(x0, x1, grid.nx + 1)
    ys = np.linspace(y0, y1, grid.ny + 1)
    R = shifts.size
    big = np.inf

    if dx_ != 0.0:
        tx = (xs[None, :] - bx[:, None]) / dx_
        tx_lo, tx_hi = np.minimum(tx[:, 0], tx[:, -1]), np.maximum(tx[:, 0], tx[:, -1])
    else:
        tx = np.full((R, 0), np.nan)
        inside = (bx > x0) & (bx < x1)
        tx_lo = np.where(inside, -big, big)
        tx_hi = np.where(inside, big, -big)
    if dy_ != 0.0:
        ty = (ys[None, :] - by[:, None]) / dy_
        ty_lo, ty_hi = np.minimum(ty[:, 0], ty[:, -1]), np.maximum(ty[:, 0], ty[:, -1])
    else:
        ty = np.full((R, 0), np.nan)
        inside = (by > y0) & (by < y1)
        ty_lo = np.where(inside, -big, big)
        ty_hi = np.where(inside, big, -big)

    t_in = np.maximum(tx_lo, ty_lo)
    t_out = np.minimum(tx_hi, ty_hi)
    hit = t_out > t_in
    rows, cols, vals = [], [], []
    if not np.any(hit):
        return rows, cols, vals
    idx = np.nonzero(hit)[0]
    t_in, t_out = t_in[idx], t_out[idx]
    T = np.concatenate([tx[idx], ty[idx], t_in[:, None], t_out[:, None]], axis=1)
    T = np.clip(T, t_in[:, None], t_out[:, None])
    T.sort(axis=1)
    seg = np.diff(T, axis=1)
    mid = 0.5 * (T[:, 1:] + T[:, :-1])
    px = bx[idx, None] + mid * dx_
    py = by[idx, None] + mid * dy_
    j = np.floor((px - x0) / grid.dx).astype(np.int64)
    i = np.floor((py - y0) / grid.dy).astype(np.int64)
    keep = (seg > _TINY * grid.dx) & (j >= 0) & (j < grid.nx) & (i >= 0) & (i < grid.ny)
    r = np.broadcast_to(idx[:, None], seg.shape)
    return r[keep], (i * grid.nx + j)[keep], seg[keep]


def _joseph_rows(theta, shifts, grid):
    """Linear interpolation between the two nearest pixels on each line of the
    driving axis, weighted by the step length along the ray."""
    bx, by, dx_, dy_ = _ray_frames(theta, shifts, grid)
    x0, x1, y0, y1 = grid.extent
    R = shifts.size
    if abs(dy_) >= abs(dx_):
        # march over pixel rows
        yc = y0 + (np.arange(grid.ny) + 0.5) * grid.dy
        t = (yc[None, :] - by[:, None]) / dy_
        pos = bx[:, None] + t * dx_
        lo, hi, pitch, n_other = x0, x1, grid.dx, grid.nx
        step = grid.dy / abs(dy_)
        lines = np.broadcast_to(np.arange(grid.ny)[None, :], pos.shape)
    else:
        xc = x0 + (np.arange(grid.nx) + 0.5) * grid.dx
        t = (xc[None, :] - bx[:, None]) / dx_
        pos = by[:, None] + t * dy_
        lo, hi, pitch, n_other = y0, y1, grid.dy, grid.ny
        step = grid.dx / abs(dx_)
        lines = np.broadcast_to(np.arange(grid.nx)[None, :], pos.shape)

    inside = (pos >= lo) & (pos <= hi)
    f = np.clip((pos - lo) / pitch - 0.5, 0.0, n_other - 1)
    k0 = np.floor(f).astype(np.int64)
    w1 = f - k0
    k1 = np.minimum(k0 + 1, n_other - 1)
    r = np.broadcast_to(np.arange(R)[:, None], pos.shape)

    if abs(dy_) >= abs(dx_):
        c0 = lines * grid.nx + k0
        c1 = lines * grid.nx + k1
    else:
        c0 = k0 * grid.nx + lines
        c1 = k1 * grid.nx + lines
    rows = np.concatenate([r[inside], r[inside]])
    cols = np.concatenate([c0[inside], c1[inside]])
    vals = np.concatenate([step * (1.0 - w1[inside]), step * w1[inside]])
    return rows, cols, vals


@dataclass(frozen=True, eq=False)
class SparseOperator:
    """Projection matrix ``W`` in CSR form together with the geometry it samples."""

    matrix: sp.csr_matrix
    geometry: ProjectionGeometry
    grid: Grid

    @property
    def kernel(self) -> Kernel:
        return self.geometry.kernel

    @property
    def shape(self):
        return self.matrix.shape

    def matvec(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if u.shape != (self.shape[1],):
            raise ValueError(f"operator expects {self.shape[1]} pixels, got {u.shape}")
        return self.matrix @ u

    def rmatvec(self, p: np.ndarray) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        if p.shape != (self.shape[0],):
            raise ValueError(f"operator expects {self.shape[0]} rays, got {p.shape}")
        return self.matrix.T @ p

    def row_image(self, i: int) -> np.ndarray:
        return self.matrix.getrow(i).toarray().ravel().reshape(self.grid.shape)

    def triplets(self):
        coo = self.matrix.tocoo()
        return coo.row, coo.col, coo.data


def assemble(geometry: ProjectionGeometry, grid: Grid) -> SparseOperator:
    """Build ``W`` for ``geometry.kernel``; rays missing the grid give empty rows."""
    rows_fn = _line_rows if geometry.kernel is Kernel.LINE else _joseph_rows
    shifts = geometry.shifts(grid)
    R = geometry.detectors
    all_r, all_c, all_v = [], [], []
    for a, theta in enumerate(geometry.angles):
        r, c, v = rows_fn(theta, shifts, grid)
        if len(r):
            all_r.append(np.asarray(r) + a * R)
            all_c.append(np.asarray(c))
            all_v.append(np.asarray(v))
    m, n = geometry.n_rows, grid.size
    if all_r:
        r, c, v = (np.concatenate(x) for x in (all_r, all_c, all_v))
    else:
        r = c = np.zeros(0, dtype=np.int64)
        v = np.zeros(0)
    W = sp.csr_matrix((v, (r, c)), shape=(m, n))
    W.sum_duplicates()
    W.eliminate_zeros()
    return SparseOperator(W, geometry, grid)


def apply(W: SparseOperator, u: Image) -> Sinogram:
    if u.grid.size != W.shape[1]:
        raise ValueError(f"image has {u.grid.size} pixels, operator expects {W.shape[1]}")
    return Sinogram(W.geometry, W.matvec(u.values))


def apply_adjoint(W: SparseOperator, p: Sinogram) -> Image:
    values = p.values if isinstance(p, Sinogram) else np.asarray(p, dtype=float)
    if values.size != W.shape[0]:
        raise ValueError(f"sinogram has {values.size} rays, operator expects {W.shape[0]}")
    return Image(W.grid, W.rmatvec(values))
