"""Brillouin-zone sampling of the band splitting and global gap minimisation."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares

from .model import BlochModel, Momentum, canonical

TWO_PI = 2.0 * np.pi


def bz_axis(n: int) -> np.ndarray:
    """``n`` uniformly spaced momenta covering [-pi, pi), endpoint excluded.

    Written as ``-pi + step * i`` so that the grid for ``2n`` contains the grid
    for ``n`` bit-for-bit.
    """
    return -np.pi + (TWO_PI / n) * np.arange(n)


def bz_grid(nx: int, ny: int) -> tuple[np.ndarray, np.ndarray]:
    return bz_axis(nx), bz_axis(ny)


@dataclass
class GapMap:
    """Band splitting on a uniform BZ grid; ``gap[i, j]`` is at ``(kx_values[i], ky_values[j])``.

    ``mask`` marks missing cells (``True`` = no value); missing cells hold NaN.
    """

    kx_values: np.ndarray
    ky_values: np.ndarray
    gap: np.ndarray
    bands_low: np.ndarray | None = None
    bands_high: np.ndarray | None = None
    params_used: dict = field(default_factory=dict)
    omega: float = 10.0
    mask: np.ndarray | None = None

    @property
    def nx(self) -> int:
        return len(self.kx_values)

    @property
    def ny(self) -> int:
        return len(self.ky_values)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nx, self.ny)

    def valid(self) -> np.ndarray:
        if self.mask is None:
            return np.ones(self.gap.shape, dtype=bool)
        return ~self.mask

    def argmin(self) -> tuple[Momentum, float]:
        values = np.where(self.valid(), self.gap, np.inf)
        i, j = np.unravel_index(np.argmin(values), values.shape)
        return Momentum(float(self.kx_values[i]), float(self.ky_values[j])), float(values[i, j])

    def local_minima(self, threshold: float | None = None) -> list[tuple[int, int]]:
        """Grid cells no larger than their 8 periodic neighbours (and below ``threshold``)."""
        values = np.where(self.valid(), self.gap, np.inf)
        return grid_local_minima(values, threshold)

    def header(self) -> dict:
        return {
            "nx": self.nx,
            "ny": self.ny,
            "kx_start": float(self.kx_values[0]),
            "ky_start": float(self.ky_values[0]),
            "kx_step": TWO_PI / self.nx,
            "ky_step": TWO_PI / self.ny,
            "omega_mhz": self.omega,
            "params_used": dict(self.params_used),
            "has_bands": self.bands_low is not None,
            "masked_cells": int(self.mask.sum()) if self.mask is not None else 0,
            "units": "MHz",
            "ordering": "row-major, kx outer, ky inner",
        }


def grid_local_minima(values: np.ndarray, threshold: float | None = None) -> list[tuple[int, int]]:
    centre = values
    is_min = np.isfinite(centre)
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            if di == 0 and dj == 0:
                continue
            is_min &= centre <= np.roll(np.roll(values, di, axis=0), dj, axis=1)
    if threshold is not None:
        is_min &= centre < threshold
    return [(int(i), int(j)) for i, j in zip(*np.nonzero(is_min))]


def sample_gap_map(model: BlochModel, params=None, nx: int = 81, ny: int = 81, store_bands: bool = False) -> GapMap:
    if nx < 2 or ny < 2:
        raise ValueError("grid sizes must be at least 2")
    kx, ky = bz_grid(nx, ny)
    KX, KY = np.meshgrid(kx, ky, indexing="ij")
    norm = np.linalg.norm(model.bloch_vector(KX, KY, params), axis=-1)
    gap = model.omega * norm
    low = high = None
    if store_bands:
        high = 0.5 * model.omega * norm
        low = -high
    return GapMap(kx, ky, gap, low, high, model.resolve(params), model.omega)


def _refine_minimum(model: BlochModel, params, k0) -> tuple[np.ndarray, float]:
    """Local minimum of |g|^2 by Levenberg-Marquardt on the residual vector g(k)."""

    def residual(k):
        return model.bloch_vector(k[0], k[1], params)

    def jac(k):
        return model.jacobian(k[0], k[1], params)

    res = least_squares(residual, np.asarray(k0, dtype=float), jac=jac, method="lm", xtol=1e-15, ftol=1e-15, gtol=1e-15)
    return res.x, float(np.linalg.norm(res.fun))


def min_gap(model: BlochModel, params=None, seed_grid_n: int = 64, n_starts: int = 5) -> tuple[Momentum, float]:
    """Global minimum of the splitting (MHz): grid scan, then multi-start local refinement."""
    if seed_grid_n < 16:
        raise ValueError("seed_grid_n must be at least 16")
    grid = sample_gap_map(model, params, seed_grid_n, seed_grid_n)
    order = np.argsort(grid.gap, axis=None, kind="stable")[:n_starts]
    best_k, best = grid.argmin()
    best /= model.omega
    for flat in order:
        i, j = np.unravel_index(flat, grid.gap.shape)
        k, value = _refine_minimum(model, params, (grid.kx_values[i], grid.ky_values[j]))
        if value < best:
            best_k, best = canonical(k), value
    return canonical(best_k), model.omega * best
