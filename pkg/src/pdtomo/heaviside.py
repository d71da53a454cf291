"""Compact smoothed Heaviside/Dirac pair with a constant-sensitivity plateau.

The Dirac approximation is supported on ``[-eps, eps]``, constant on
``[-mu*eps, mu*eps]`` and joined to zero by a sinusoidal S-ramp on each
transition band. The ramp is parametrized so that the function is C1 with
unit mass for every ``0 < mu < 1``; at ``mu = 1/3`` it coincides with the
printed five-branch formula, which is kept as :func:`dirac_printed` for
reference.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class HeavisideConfig:
    kappa: float = 0.04
    mu: float = 1.0 / 3.0
    eps_min: float | None = None

    def __post_init__(self):
        if not self.kappa > 0:
            raise ValueError("kappa must be positive")
        _check(1.0, self.mu)

    @property
    def floor(self) -> float:
        return self.kappa if self.eps_min is None else self.eps_min


def _check(eps, mu):
    if not np.all(np.asarray(eps) > 0):
        raise ValueError(f"eps must be positive, got {eps}")
    if not 0 < mu < 1:
        raise ValueError(f"mu must lie in (0, 1), got {mu}")


def _ramp_coord(a, eps, mu):
    # maps |x| in [mu*eps, eps] onto t in [1, -1]
    half = 0.5 * (1.0 - mu) * eps
    return ((1.0 + mu) * 0.5 * eps - a) / half


def dirac(x, eps, mu=1.0 / 3.0):
    _check(eps, mu)
    x = np.asarray(x, dtype=float)
    a = np.abs(x)
    height = 1.0 / ((1.0 + mu) * eps)
    t = _ramp_coord(a, eps, mu)
    ramp = 0.5 * height * (1.0 + t + np.sin(np.pi * t) / np.pi)
    out = np.where(a <= mu * eps, height, np.where(a < eps, ramp, 0.0))
    return out if out.ndim else float(out)


def heaviside(x, eps, mu=1.0 / 3.0):
    """Antiderivative of :func:`dirac` with ``h(-eps) = 0`` and ``h(eps) = 1``."""
    _check(eps, mu)
    x = np.asarray(x, dtype=float)
    a = np.abs(x)
    height = 1.0 / ((1.0 + mu) * eps)
    half = 0.5 * (1.0 - mu) * eps
    t = _ramp_coord(a, eps, mu)
    ramp = 0.5 * half * height * (0.5 * (1.0 + t) ** 2 - (1.0 + np.cos(np.pi * t)) / np.pi**2)
    plateau = half * height + height * (mu * eps - a)
    left = np.where(a <= mu * eps, plateau, np.where(a < eps, ramp, 0.0))
    out = np.where(x > 0, 1.0 - left, left)
    return out if out.ndim else float(out)


def dirac_printed(x, eps, mu):
    """Five-branch Dirac formula exactly as printed; consistent only at mu = 1/3."""
    x = np.asarray(x, dtype=float)
    c = 1.0 / (4.0 * (1.0 - mu) * eps)
    u = (x + (1.0 - mu) * eps) / (mu * eps)
    v = (x - (1.0 - mu) * eps) / (mu * eps)
    left = c * (1.0 + u + np.sin(np.pi * u) / np.pi)
    right = c * (1.0 - v - np.sin(np.pi * v) / np.pi)
    plateau = 1.0 / (2.0 * (1.0 - mu) * eps)
    out = np.select(
        [x <= -eps, x <= -mu * eps, x <= mu * eps, x < eps],
        [0.0, left, plateau, right],
        default=0.0,
    )
    return out if out.ndim else float(out)


def compute_epsilon(phi, dx: float, kappa: float = 0.04, eps_min: float | None = None) -> float:
    """Heaviside width ``kappa * (max(phi) - min(phi)) / dx``.

    ``dx`` is the pixel pitch in whatever unit the solver measures it;
    :func:`~pdtomo.solvers.joint_reconstruct` uses one pixel, so ``kappa``
    is the band half-width as a fraction of the level-set range. A flat
    ``phi`` has no usable range; ``eps_min`` (default ``kappa``) is returned
    instead so the band is never empty.
    """
    phi = np.asarray(phi, dtype=float)
    if phi.size == 0 or not np.all(np.isfinite(phi)):
        raise ValueError("phi must be non-empty and finite")
    if not dx > 0:
        raise ValueError("dx must be positive")
    spread = float(phi.max() - phi.min())
    if spread <= 0.0:
        return float(kappa if eps_min is None else eps_min)
    return kappa * spread / dx


def boundary_band(phi, eps, mu=1.0 / 3.0) -> np.ndarray:
    """Indices where the Dirac approximation is positive (the level-set boundary)."""
    return np.nonzero(dirac(phi, eps, mu) > 0)[0]


def guard_band(phi, eps: float) -> float:
    """Widen ``eps`` when a sign-changing ``phi`` has no pixel inside ``(-eps, eps)``.

    On coarse grids the zero level set can fall between pixel centres with
    every sample further than ``eps`` from zero; the Dirac term then
    vanishes everywhere and the shape gradient is identically zero. In that
    case the width is raised to twice the smallest ``|phi|`` so the pixels
    straddling the boundary enter the band. Otherwise ``eps`` is returned
    unchanged.
    """
    phi = np.asarray(phi, dtype=float)
    if not (phi.min() < 0.0 < phi.max()):
        return float(eps)
    closest = float(np.abs(phi).min())
    return float(eps) if closest < eps else 2.0 * closest
