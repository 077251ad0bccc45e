"""Logarithmic (2-D Newtonian) potential of gridded densities.

``u(x_k) = -(h^2 / 2 pi) sum_m K(x_k - x_m) rho(x_m)`` with
``K(d) = ln|d|`` off the diagonal and ``K(0) = ln(c0 h)``, where ``ln(c0 h)``
is the mean of ``ln|y|`` over a square cell of side ``h`` centered at 0:
``ln c0 = pi/4 - 3/2 - ln(2)/2``.

The discrete convolution is evaluated with a zero-padded FFT on the doubled
grid; :func:`direct_potential` keeps the O(N^4) sum as an oracle.
"""

from __future__ import annotations

import os
from functools import lru_cache

import numpy as np
import scipy.fft
from scipy import ndimage

from .errors import DomainError
from .field import DensityField, Grid2D

LOG_C0 = np.pi / 4 - 1.5 - 0.5 * np.log(2.0)

_workers = os.cpu_count() or 1


def set_threads(k: int | None) -> None:
    """Worker count for FFTs (``None`` restores the hardware count)."""
    global _workers
    _workers = (os.cpu_count() or 1) if k is None else max(1, int(k))


def get_threads() -> int:
    return _workers


def self_cell_log(h: float) -> float:
    return LOG_C0 + np.log(h)


def _offset_kernel(N: int, h: float) -> np.ndarray:
    """``K`` on the doubled grid, offsets wrapped FFT style (index j -> j or j-2N)."""
    j = np.arange(2 * N)
    j = np.where(j < N, j, j - 2 * N).astype(float)
    d2 = (j[:, None] ** 2 + j[None, :] ** 2) * h * h
    d2[0, 0] = 1.0
    K = 0.5 * np.log(d2)
    K[0, 0] = self_cell_log(h)
    K[N, :] = 0.0
    K[:, N] = 0.0
    return K


@lru_cache(maxsize=8)
def _kernel_hat(N: int, L: float) -> np.ndarray:
    h = 2 * L / N
    Khat = scipy.fft.rfft2(_offset_kernel(N, h))
    Khat.setflags(write=False)
    return Khat


def log_convolve(grid: Grid2D, rho: np.ndarray) -> np.ndarray:
    """``h^2 sum_m K(x_k - x_m) rho_m`` for one or several species (leading axes)."""
    N = grid.N
    Khat = _kernel_hat(N, grid.L)
    rho = np.asarray(rho, dtype=float)
    padded_hat = scipy.fft.rfft2(rho, s=(2 * N, 2 * N), workers=_workers)
    conv = scipy.fft.irfft2(padded_hat * Khat, s=(2 * N, 2 * N), workers=_workers)
    return grid.cell_area * conv[..., :N, :N]


class PotentialField:
    """Per-species potentials ``u_i`` at cell centers and their source masses."""

    def __init__(self, grid: Grid2D, values, source_mass):
        vals = np.array(values, dtype=float)
        if not np.all(np.isfinite(vals)):
            raise DomainError("potential values must be finite")
        vals.setflags(write=False)
        self.grid = grid
        self.values = vals
        self.source_mass = np.array(source_mass, dtype=float)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def at(self, i: int, points) -> np.ndarray:
        """Cubic-spline interpolation of ``u_i`` at physical points, shape (m, 2)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        g = self.grid
        idx = (pts + g.L) / g.h - 0.5
        return ndimage.map_coordinates(self.values[i], idx.T, order=3, mode="nearest")

    def combine(self, other: "PotentialField", theta: float) -> "PotentialField":
        """Potential of ``(1 - theta) rho + theta rho'`` by linearity."""
        return PotentialField(
            self.grid,
            (1 - theta) * self.values + theta * other.values,
            (1 - theta) * self.source_mass + theta * other.source_mass,
        )


def newtonian_potential(field: DensityField) -> PotentialField:
    u = -log_convolve(field.grid, field.values) / (2 * np.pi)
    return PotentialField(field.grid, u, field.masses())


def direct_potential(field: DensityField) -> PotentialField:
    """Same discrete sum as :func:`newtonian_potential`, summed pair by pair."""
    grid = field.grid
    X, Y = grid.mesh
    pts = np.stack([X.ravel(), Y.ravel()], axis=1)
    rho = field.values.reshape(field.n, -1)
    u = np.zeros_like(rho)
    self_k = self_cell_log(grid.h)
    chunk = 512
    for start in range(0, pts.shape[0], chunk):
        p = pts[start:start + chunk]
        d2 = np.sum((p[:, None, :] - pts[None, :, :]) ** 2, axis=-1)
        diag = d2 == 0
        d2[diag] = 1.0
        K = 0.5 * np.log(d2)
        K[diag] = self_k
        u[:, start:start + chunk] = rho @ K.T
    u *= -grid.cell_area / (2 * np.pi)
    return PotentialField(grid, u.reshape(field.values.shape), field.masses())


def far_field_error(pot: PotentialField, i: int, R: float) -> float:
    """Max of ``|u_i(x) + (beta_i / 2 pi) ln|x||`` over ``R <= |x| <= 0.95 L``."""
    grid = pot.grid
    r = np.sqrt(grid.r2)
    ring = (r >= R) & (r <= 0.95 * grid.L)
    if not np.any(ring):
        raise DomainError(f"no cells with {R} <= |x| <= {0.95 * grid.L}")
    beta = pot.source_mass[i]
    return float(np.max(np.abs(pot.values[i][ring] + beta / (2 * np.pi) * np.log(r[ring]))))


def interaction_energy(field: DensityField, pot: PotentialField) -> np.ndarray:
    """``I_ij = int int rho_i(x) ln|x-y| rho_j(y) = -2 pi int rho_i u_j``."""
    if field.grid != pot.grid or field.n != pot.n:
        raise DomainError("field and potential live on different grids")
    h2 = field.grid.cell_area
    rho = field.values.reshape(field.n, -1)
    u = pot.values.reshape(pot.n, -1)
    return -2 * np.pi * h2 * (rho @ u.T)
