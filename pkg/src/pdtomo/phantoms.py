"""Procedural partially discrete phantoms and SNR-controlled noise.

Each anomaly is the positive set of a generator level set built from
Gaussian primitives, so its boundary is smooth at any resolution. Backgrounds
are smooth fields rescaled to ``[0, background_max]``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Grid, Image, Sinogram, pixel_centers

MODELS = ("A", "B", "C", "D", "BinaryDemo")
_BACKGROUND_MAX = {"A": 0.5, "B": 0.5, "C": 0.8, "D": 0.8, "BinaryDemo": 0.0}


@dataclass(frozen=True)
class PhantomSpec:
    model_id: str = "A"
    size: int = 256
    background_max: float | None = None
    anomaly_value: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.model_id not in MODELS:
            raise ValueError(f"unknown model_id {self.model_id!r}; choose from {MODELS}")
        if self.size < 32:
            raise ValueError("phantom size must be at least 32")

    @property
    def bmax(self) -> float:
        if self.background_max is not None:
            return float(self.background_max)
        return _BACKGROUND_MAX[self.model_id]

    @property
    def grid(self) -> Grid:
        return Grid.square(self.size)


def _beads(x, y, centers, sigma):
    out = np.zeros_like(x)
    for cx, cy in centers:
        out += np.exp(-((x - cx) ** 2 + (y - cy) ** 2) / (2.0 * sigma**2))
    return out


def _lobes(rng, n_lobes, radius, center=(0.5, 0.5)):
    phase = rng.uniform(0, 2 * np.pi)
    ang = phase + 2 * np.pi * np.arange(n_lobes) / n_lobes + rng.uniform(-0.3, 0.3, n_lobes)
    rad = radius * rng.uniform(0.8, 1.2, n_lobes)
    return np.column_stack([center[0] + rad * np.cos(ang), center[1] + rad * np.sin(ang)])


def _arc(center, radius, start, span, n=24):
    t = start + span * np.linspace(0.0, 1.0, n)
    return np.column_stack([center[0] + radius * np.cos(t), center[1] + radius * np.sin(t)])


def level_set_generator(model_id: str, seed: int = 0):
    """Return ``phi(x, y)`` whose positive set is the anomaly."""
    rng = np.random.default_rng([seed, MODELS.index(model_id)])
    if model_id == "A":
        c = np.vstack([[0.5, 0.5], _lobes(rng, 4, 0.15, (0.5, 0.5))])
        return lambda x, y: _beads(x, y, c, 0.065) - 0.5
    if model_id == "B":
        c = np.vstack([[0.45, 0.55], _lobes(rng, 3, 0.13, (0.45, 0.55)), [[0.64, 0.33]]])
        return lambda x, y: _beads(x, y, c, 0.07) - 0.5
    if model_id == "C":
        c = _arc((0.5, 0.5), 0.2, rng.uniform(0, 2 * np.pi), 4.0)
        return lambda x, y: _beads(x, y, c, 0.06) - 1.9
    if model_id == "D":
        start = rng.uniform(0, 2 * np.pi)
        arc = _arc((0.5, 0.5), 0.22, start, 3.4)
        spur = _arc((0.5, 0.5), 0.22, start + 0.5 * 3.4, 0.0, n=1)[0]
        inner = 0.5 + np.outer(np.linspace(1.0, 0.55, 6), spur - 0.5)
        c = np.vstack([arc, inner])
        return lambda x, y: _beads(x, y, c, 0.06) - 1.9
    c = np.vstack([[0.5, 0.5], _lobes(rng, 5, 0.17, (0.5, 0.5))])
    return lambda x, y: _beads(x, y, c, 0.06) - 0.5


def _background_field(model_id, seed, x, y):
    rng = np.random.default_rng([seed, 100 + MODELS.index(model_id)])
    a, b, c = rng.uniform(-1, 1, 3)
    field = a * x + b * y + c * x * y
    for _ in range(2):
        cx, cy = rng.uniform(0.2, 0.8, 2)
        field += 0.8 * np.exp(-((x - cx) ** 2 + (y - cy) ** 2) / (2 * 0.15**2))
    return field


def make_phantom(spec: PhantomSpec):
    """Return ``(u_true, mask_true, u0_true)`` for ``spec``."""
    grid = spec.grid
    pts = pixel_centers(grid)
    x, y = pts[:, 0], pts[:, 1]
    mask = level_set_generator(spec.model_id, spec.seed)(x, y) > 0
    if spec.bmax > 0:
        f = _background_field(spec.model_id, spec.seed, x, y)
        u0 = (f - f.min()) / (f.max() - f.min()) * spec.bmax
    else:
        u0 = np.zeros(grid.size)
    u = np.where(mask, spec.anomaly_value, u0)
    return Image(grid, u), mask, Image(grid, u0)


def add_noise_snr(p, snr_db: float, seed: int = 0):
    """Add white Gaussian noise rescaled so the realized SNR equals ``snr_db``.

    Returns the noisy data in the same container type as ``p``.
    """
    values = p.values if isinstance(p, Sinogram) else np.asarray(p, dtype=float)
    pnorm = np.linalg.norm(values)
    if pnorm == 0:
        raise ValueError("cannot set an SNR for all-zero data")
    if np.isinf(snr_db) and snr_db > 0:
        noisy = values.copy()
    else:
        eta = np.random.default_rng(seed).standard_normal(values.shape)
        eta *= pnorm * 10.0 ** (-snr_db / 20.0) / np.linalg.norm(eta)
        noisy = values + eta
    return Sinogram(p.geometry, noisy) if isinstance(p, Sinogram) else noisy
