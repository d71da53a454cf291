"""Data misfit in the level-set weights, its derivatives, and the background subproblem.

Everything here works on flat row-major arrays. ``W`` may be a
:class:`~pdtomo.projector.SparseOperator` or anything with ``@`` and ``.T``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .core import Grid, Image, Sinogram
from .heaviside import dirac, heaviside


def _vec(x) -> np.ndarray:
    if isinstance(x, (Image, Sinogram)):
        return x.values
    return np.asarray(x, dtype=float)


def _mat(W):
    return getattr(W, "matrix", W)


def _check_dims(alpha, u0, W, A, p=None):
    W, A = _mat(W), _mat(A)
    if A.shape[1] != alpha.shape[0]:
        raise ValueError(f"alpha has {alpha.shape[0]} weights, A has {A.shape[1]} columns")
    if np.ndim(u0) and u0.shape[0] != A.shape[0]:
        raise ValueError(f"u0 has {u0.shape[0]} pixels, A has {A.shape[0]} rows")
    if W is not None and W.shape[1] != A.shape[0]:
        raise ValueError(f"W has {W.shape[1]} columns, A has {A.shape[0]} rows")
    if p is not None and W is not None and p.shape[0] != W.shape[0]:
        raise ValueError(f"p has {p.shape[0]} rays, W has {W.shape[0]} rows")


def compose_image(alpha, u0, u1, A, eps, mu) -> np.ndarray:
    """``(1 - h(A alpha)) * u0 + h(A alpha) * u1``."""
    alpha, u0 = _vec(alpha), _vec(u0)
    _check_dims(alpha, u0, None, A)
    h = heaviside(_mat(A) @ alpha, eps, mu)
    return (1.0 - h) * u0 + h * u1


def residual(alpha, u0, u1, W, A, p, eps, mu) -> np.ndarray:
    alpha, u0, p = _vec(alpha), _vec(u0), _vec(p)
    _check_dims(alpha, u0, W, A, p)
    W, A = _mat(W), _mat(A)
    h = heaviside(A @ alpha, eps, mu)
    return W @ ((u1 - u0) * h) - (p - W @ u0)


class ShapeObjective:
    """``f(alpha) = 0.5 * ||r(alpha)||^2`` for a fixed background and width.

    Evaluations at the same ``alpha`` are cached so that a trust-region step
    costs one forward projection per new point.
    """

    def __init__(self, W, A, p, u0, u1, eps, mu):
        self.W = _mat(W)
        self.A = _mat(A)
        self.p = _vec(p)
        self.u0 = np.broadcast_to(_vec(u0), (self.A.shape[0],)).astype(float)
        self.u1 = float(u1)
        self.eps = float(eps)
        self.mu = float(mu)
        self.contrast = self.u1 - self.u0
        self._base = self.p - self.W @ self.u0
        self._key = None

    def _at(self, alpha):
        alpha = np.asarray(alpha, dtype=float)
        if alpha.shape != (self.A.shape[1],):
            raise ValueError(f"alpha must have length {self.A.shape[1]}")
        if self._key is None or not np.array_equal(self._key, alpha):
            phi = self.A @ alpha
            h = heaviside(phi, self.eps, self.mu)
            r = self.W @ (self.contrast * h) - self._base
            self._key = alpha.copy()
            self._phi, self._h, self._r = phi, h, r
            self._d = self.contrast * dirac(phi, self.eps, self.mu)
        return self

    def value(self, alpha) -> float:
        self._at(alpha)
        return 0.5 * float(self._r @ self._r)

    def residual(self, alpha) -> np.ndarray:
        return self._at(alpha)._r

    def gradient(self, alpha) -> np.ndarray:
        self._at(alpha)
        g = self.A.T @ (self._d * (self.W.T @ self._r))
        return g

    def value_and_gradient(self, alpha):
        f = self.value(alpha)
        if not np.isfinite(f):
            raise FloatingPointError("objective is not finite")
        return f, self.gradient(alpha)

    def jacobian_apply(self, alpha, v) -> np.ndarray:
        self._at(alpha)
        return self.W @ (self._d * (self.A @ v))

    def hessian_apply(self, alpha, v) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        if v.shape != (self.A.shape[1],):
            raise ValueError(f"v must have length {self.A.shape[1]}")
        Jv = self.jacobian_apply(alpha, v)
        return self.A.T @ (self._d * (self.W.T @ Jv))

    def heaviside(self, alpha) -> np.ndarray:
        return self._at(alpha)._h


def objective_value_and_gradient(alpha, u0, u1, W, A, p, eps, mu):
    alpha, u0, p = _vec(alpha), _vec(u0), _vec(p)
    _check_dims(alpha, u0, W, A, p)
    return ShapeObjective(W, A, p, u0, u1, eps, mu).value_and_gradient(alpha)


def gn_hessian_apply(alpha, v, u0, u1, W, A, p, eps, mu) -> np.ndarray:
    """Gauss-Newton Hessian ``A^T D W^T W D A`` applied to ``v``, matrix-free."""
    alpha, u0, p = _vec(alpha), _vec(u0), _vec(p)
    _check_dims(alpha, u0, W, A, p)
    return ShapeObjective(W, A, p, u0, u1, eps, mu).hessian_apply(alpha, v)


@dataclass(frozen=True, eq=False)
class RegularizerL:
    """Stacked second differences ``[Lx; Ly]`` on interior pixels only."""

    Lx: sp.csr_matrix
    Ly: sp.csr_matrix
    lam: float = 0.0

    @property
    def matrix(self) -> sp.csr_matrix:
        return sp.vstack([self.Lx, self.Ly], format="csr")

    def with_lambda(self, lam: float) -> "RegularizerL":
        return RegularizerL(self.Lx, self.Ly, lam)


def _second_difference(n: int, h: float) -> sp.csr_matrix:
    return sp.diags([1.0, -2.0, 1.0], [0, 1, 2], shape=(n - 2, n), format="csr") / h**2


def build_regularizer(grid: Grid, lam: float = 0.0) -> RegularizerL:
    if grid.nx < 3 or grid.ny < 3:
        raise ValueError("second differences need at least 3 pixels per axis")
    Dx = _second_difference(grid.nx, grid.dx)
    Dy = _second_difference(grid.ny, grid.dy)
    Lx = sp.kron(sp.identity(grid.ny), Dx, format="csr")
    Ly = sp.kron(Dy, sp.identity(grid.nx), format="csr")
    return RegularizerL(Lx, Ly, float(lam))


class StackedSystem:
    """Least-squares system ``min ||[M1; M2] x - [b1; b2]||`` applied block-wise."""

    def __init__(self, blocks, rhs):
        self.blocks = [b for b in blocks]
        self.sizes = [b.shape[0] for b in self.blocks]
        self.rhs = np.concatenate([np.asarray(r, dtype=float) for r in rhs])
        n = {b.shape[1] for b in self.blocks}
        if len(n) != 1 or self.rhs.size != sum(self.sizes):
            raise ValueError("inconsistent block shapes")
        self.shape = (self.rhs.size, n.pop())

    def matvec(self, x):
        return np.concatenate([b @ x for b in self.blocks])

    def rmatvec(self, y):
        out = np.zeros(self.shape[1])
        start = 0
        for b, m in zip(self.blocks, self.sizes):
            out += b.T @ y[start:start + m]
            start += m
        return out


def background_system(alpha, u1, W, A, p, L: RegularizerL, lam, eps, mu) -> StackedSystem:
    """Linear system whose least-squares solution is the best background for ``alpha``."""
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    alpha, p = _vec(alpha), _vec(p)
    W, A = _mat(W), _mat(A)
    h = heaviside(A @ alpha, eps, mu)
    data = W @ sp.diags(1.0 - h)
    b1 = p - W @ (h * u1)
    Lm = L.matrix
    reg = np.sqrt(lam) * Lm
    return StackedSystem([data, reg], [b1, np.zeros(Lm.shape[0])])


def joint_objective(alpha, u0, u1, W, A, p, L: RegularizerL, lam, eps, mu) -> float:
    u0 = _vec(u0)
    r = residual(alpha, u0, u1, W, A, p, eps, mu)
    Lu = L.matrix @ u0
    return 0.5 * float(r @ r) + 0.5 * lam * float(Lu @ Lu)
