"""Density tuples on a truncated square and the operations acting on them.

Densities are cell-center samples on ``[-L, L]^2`` with ``N`` cells per side
(``N`` even, so the grid is symmetric about the origin). Integrals use the
midpoint rule with cell measure ``h^2``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import ndimage

from .errors import DomainError, SupportOverflowError

TINY = 1e-300
MASS_RTOL = 1e-10
ESCAPE_RTOL = 1e-8

DEFAULT_L = 12.0
DEFAULT_N = 256


@dataclass(frozen=True)
class Grid2D:
    L: float = DEFAULT_L
    N: int = DEFAULT_N

    def __post_init__(self):
        if not self.L > 0:
            raise DomainError("half width L must be positive")
        if int(self.N) != self.N or self.N <= 0 or self.N % 2:
            raise DomainError("N must be a positive even integer")
        object.__setattr__(self, "L", float(self.L))
        object.__setattr__(self, "N", int(self.N))

    @property
    def h(self) -> float:
        return 2.0 * self.L / self.N

    @property
    def cell_area(self) -> float:
        return self.h ** 2

    @cached_property
    def x(self) -> np.ndarray:
        """1-d cell centers, ``-L + (k + 1/2) h``."""
        return -self.L + (np.arange(self.N) + 0.5) * self.h

    @cached_property
    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        """``(X, Y)`` with ``X[a, b] = x[a]`` and ``Y[a, b] = x[b]``."""
        return np.meshgrid(self.x, self.x, indexing="ij")

    @cached_property
    def r2(self) -> np.ndarray:
        X, Y = self.mesh
        return X ** 2 + Y ** 2

    def dist2(self, center) -> np.ndarray:
        X, Y = self.mesh
        cx, cy = np.asarray(center, dtype=float)
        return (X - cx) ** 2 + (Y - cy) ** 2

    def integrate(self, f) -> np.ndarray:
        """Midpoint quadrature over the last two axes."""
        return self.cell_area * np.sum(f, axis=(-2, -1))

    def sample(self, func) -> np.ndarray:
        X, Y = self.mesh
        return np.asarray(func(X, Y), dtype=float)


class DensityField:
    """Per-species nonnegative densities on a :class:`Grid2D`.

    Values are copied and frozen at construction. ``target_mass`` defaults to
    the discrete masses of ``values``.
    """

    def __init__(self, grid: Grid2D, values, target_mass=None):
        vals = np.array(values, dtype=float)
        if vals.ndim == 2:
            vals = vals[None]
        if vals.ndim != 3 or vals.shape[1:] != (grid.N, grid.N):
            raise DomainError(f"values must have shape (n, {grid.N}, {grid.N}), got {vals.shape}")
        if not np.all(np.isfinite(vals)):
            raise DomainError("density values must be finite")
        if np.any(vals < 0):
            raise DomainError("density values must be nonnegative")
        vals[vals < TINY] = 0.0
        vals.setflags(write=False)
        self.grid = grid
        self.values = vals
        if target_mass is None:
            target_mass = grid.integrate(vals)
        tm = np.array(target_mass, dtype=float).reshape(-1)
        if tm.shape != (vals.shape[0],):
            raise DomainError("target_mass must have one entry per species")
        tm.setflags(write=False)
        self.target_mass = tm

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def masses(self) -> np.ndarray:
        return self.grid.integrate(self.values)

    def normalized(self, beta=None) -> "DensityField":
        """Rescale each species to carry exactly its target (or given) mass."""
        beta = self.target_mass if beta is None else np.asarray(beta, dtype=float)
        m = self.masses()
        if np.any(m <= 0):
            raise DomainError("cannot normalize a species with zero mass")
        return DensityField(self.grid, self.values * (beta / m)[:, None, None], beta)

    def replace(self, i: int, values) -> "DensityField":
        vals = np.array(self.values)
        vals[i] = values
        return DensityField(self.grid, vals, self.target_mass)

    def __repr__(self):
        return f"DensityField(n={self.n}, grid={self.grid}, mass={self.masses()})"

    @classmethod
    def gaussians(cls, grid: Grid2D, beta, centers=None, variance=1.0) -> "DensityField":
        """Tuple of isotropic Gaussians ``beta_i/(2 pi s) exp(-|x-c_i|^2 / 2s)``.

        Sampled at cell centers and renormalized to ``beta_i`` on the grid.
        """
        beta = np.atleast_1d(np.asarray(beta, dtype=float))
        if centers is None:
            centers = np.zeros((beta.size, 2))
        centers = np.asarray(centers, dtype=float).reshape(-1, 2)
        var = np.broadcast_to(np.asarray(variance, dtype=float), beta.shape)
        vals = np.stack([
            b / (2 * np.pi * s) * np.exp(-grid.dist2(c) / (2 * s))
            for b, c, s in zip(beta, centers, var)
        ])
        return cls(grid, vals, beta).normalized()


def species_range(field: DensityField, i=None):
    return range(field.n) if i is None else [i]


def entropy(field: DensityField, i: int) -> float:
    """``h^2 sum rho ln rho`` for species ``i`` with ``0 ln 0 = 0``."""
    rho = field.values[i]
    pos = rho > 0
    return float(field.grid.cell_area * np.sum(rho[pos] * np.log(rho[pos])))


def abs_entropy(field: DensityField, i: int) -> float:
    rho = field.values[i]
    pos = rho > 0
    return float(field.grid.cell_area * np.sum(rho[pos] * np.abs(np.log(rho[pos]))))


def second_moment(field: DensityField, i: int, center=(0.0, 0.0)) -> float:
    return float(field.grid.cell_area * np.sum(field.grid.dist2(center) * field.values[i]))


def centroid(field: DensityField, i: int) -> np.ndarray:
    X, Y = field.grid.mesh
    rho = field.values[i]
    m = rho.sum()
    return np.array([np.sum(X * rho) / m, np.sum(Y * rho) / m])


def entropy_bound_check(field: DensityField) -> tuple[float, float, bool]:
    """Evaluate both sides of the L log L control inequality.

    ``sum |rho ln rho| <= sum rho ln rho + 2 ln(2 pi) sum(mass)
    + 2 sum int |x|^2 rho + 2 n / e``.
    """
    n = field.n
    lhs = sum(abs_entropy(field, i) for i in range(n))
    rhs = (sum(entropy(field, i) for i in range(n))
           + 2 * np.log(2 * np.pi) * float(field.masses().sum())
           + 2 * sum(second_moment(field, i) for i in range(n))
           + 2 * n / np.e)
    return lhs, float(rhs), bool(lhs <= rhs + 1e-8 * (1 + abs(rhs)))


def _index_coords(grid: Grid2D, X, Y):
    """Fractional array indices of physical points (cell centers at integers)."""
    return (X + grid.L) / grid.h - 0.5, (Y + grid.L) / grid.h - 0.5


def _interp(grid: Grid2D, rho, X, Y, order=1):
    ia, ib = _index_coords(grid, X, Y)
    return ndimage.map_coordinates(rho, [ia, ib], order=order, mode="grid-constant", cval=0.0)


def dilate(field: DensityField, R: float) -> DensityField:
    """Mass-preserving dilation ``rho(x) -> R^2 rho(R x)``.

    Cubic-spline interpolation of the source (undershoots clipped at zero)
    followed by renormalization to the target masses. Bilinear sampling
    would add ``O(h^2)`` spurious variance, which the dilation then scales
    by ``1/R^2``. Raises :class:`SupportOverflowError` when more than
    ``1e-8`` of a species' mass would leave the domain (``R < 1``).
    """
    if not R > 0:
        raise DomainError("dilation factor must be positive")
    grid = field.grid
    if R == 1:
        return field
    if R < 1:
        # source points sampled by R*x_k span |x|_inf <= R*L
        X, Y = grid.mesh
        outside = np.maximum(np.abs(X), np.abs(Y)) > R * grid.L - 0.5 * grid.h
        lost = grid.cell_area * np.sum(field.values[:, outside], axis=1)
        if np.any(lost > ESCAPE_RTOL * field.masses()):
            raise SupportOverflowError(f"dilation by R={R} pushes mass {lost} out of the domain")
    X, Y = grid.mesh
    vals = np.stack([R * R * _interp(grid, rho, R * X, R * Y, order=3) for rho in field.values])
    vals = np.maximum(vals, 0.0)
    return DensityField(grid, vals, field.target_mass).normalized()


def translate(field: DensityField, x0) -> DensityField:
    """Shift every species by ``x0``: ``rho(x) -> rho(x - x0)``.

    Shifts that are whole multiples of ``h`` move cell values exactly;
    others use bilinear interpolation. Mass leaving the domain beyond
    ``1e-8`` relative raises :class:`SupportOverflowError`.
    """
    grid = field.grid
    x0 = np.asarray(x0, dtype=float)
    shift = x0 / grid.h
    k = np.round(shift)
    if np.allclose(shift, k, rtol=0, atol=1e-9):
        vals = np.zeros_like(field.values)
        ka, kb = int(k[0]), int(k[1])
        N = grid.N
        if abs(ka) < N and abs(kb) < N:
            src_a = slice(max(0, -ka), min(N, N - ka))
            src_b = slice(max(0, -kb), min(N, N - kb))
            dst_a = slice(max(0, ka), min(N, N + ka))
            dst_b = slice(max(0, kb), min(N, N + kb))
            vals[:, dst_a, dst_b] = field.values[:, src_a, src_b]
    else:
        X, Y = grid.mesh
        vals = np.stack([_interp(grid, rho, X - x0[0], Y - x0[1]) for rho in field.values])
        vals = np.maximum(vals, 0.0)
    lost = field.masses() - grid.integrate(vals)
    if np.any(lost > ESCAPE_RTOL * field.masses()):
        raise SupportOverflowError(f"translation by {x0} pushes mass {lost} out of the domain")
    out = DensityField(grid, vals, field.target_mass)
    if np.all(out.masses() > 0):
        out = out.normalized()
    return out


def _radial_order(grid: Grid2D) -> np.ndarray:
    return np.argsort(grid.r2.ravel(), kind="stable")


def rearrange_radial(field: DensityField, i: int | None = None) -> DensityField:
    """Symmetric decreasing rearrangement about the origin.

    Cell values are sorted in decreasing order and placed on cells sorted by
    increasing distance to the origin, so the multiset of cell values (hence
    mass and entropy) is unchanged. Rearranges species ``i``, or all species
    when ``i`` is None.
    """
    order = _radial_order(field.grid)
    vals = np.array(field.values)
    for k in species_range(field, i):
        flat = np.empty(order.size)
        flat[order] = np.sort(field.values[k].ravel())[::-1]
        vals[k] = flat.reshape(field.grid.N, field.grid.N)
    return DensityField(field.grid, vals, field.target_mass)
