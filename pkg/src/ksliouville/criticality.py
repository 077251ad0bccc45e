"""Criticality algebra for multi-species logarithmic interactions.

All quantities here are closed form. Subsets of the species index set are
encoded as bitmask integers (bit ``i`` set means species ``i`` belongs to the
subset), which makes tables keyed by subset canonical and order free.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .errors import DomainError

EIGHT_PI = 8.0 * np.pi
MAX_SPECIES_CLASSIFY = 20

SUB_CRITICAL = "sub-critical"
CRITICAL = "critical"
DEGENERATE = "degenerate-admissible"
INADMISSIBLE = "inadmissible"


def _readonly(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class InteractionSpec:
    """Coupling matrix, masses and drift centers of an n-species system.

    Parameters
    ----------
    A : array_like, shape (n, n)
        Symmetric, entrywise nonnegative coupling matrix. Symmetry is checked
        with exact equality; symmetrize before constructing.
    beta : array_like, shape (n,)
        Positive species masses.
    v : array_like, shape (n, 2), optional
        Drift centers. Defaults to the origin for every species.
    """

    A: np.ndarray
    beta: np.ndarray
    v: np.ndarray = field(default=None)

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        beta = np.atleast_1d(np.asarray(self.beta, dtype=float))
        n = beta.shape[0]
        if beta.ndim != 1 or n == 0:
            raise DomainError("beta must be a nonempty 1-d vector")
        if A.shape != (n, n):
            raise DomainError(f"A must have shape ({n}, {n}), got {A.shape}")
        if not np.all(np.isfinite(A)) or not np.all(np.isfinite(beta)):
            raise DomainError("A and beta must be finite")
        if not np.array_equal(A, A.T):
            raise DomainError("A must be exactly symmetric")
        if np.any(A < 0):
            raise DomainError("A must be entrywise nonnegative")
        if np.any(beta <= 0):
            raise DomainError("all masses beta_i must be positive")
        if self.v is None:
            v = np.zeros((n, 2))
        else:
            v = np.asarray(self.v, dtype=float).reshape(-1, 2)
            if v.shape != (n, 2):
                raise DomainError(f"v must have shape ({n}, 2), got {v.shape}")
        object.__setattr__(self, "A", _readonly(A))
        object.__setattr__(self, "beta", _readonly(beta))
        object.__setattr__(self, "v", _readonly(v))

    @property
    def n(self) -> int:
        return self.beta.shape[0]

    def with_beta(self, beta) -> "InteractionSpec":
        return InteractionSpec(self.A, beta, self.v)

    def with_drifts(self, v) -> "InteractionSpec":
        return InteractionSpec(self.A, self.beta, v)

    def centered(self) -> "InteractionSpec":
        """Same couplings and masses with every drift center at the origin."""
        return InteractionSpec(self.A, self.beta, np.zeros((self.n, 2)))


def subset_mask(J: Iterable[int] | int, n: int) -> int:
    """Bitmask of a subset given as an iterable of 0-based indices or a mask."""
    if isinstance(J, (int, np.integer)):
        mask = int(J)
        if mask <= 0 or mask >= (1 << n):
            raise DomainError(f"subset mask {mask} is empty or outside {{0..{n - 1}}}")
        return mask
    mask = 0
    for i in J:
        i = int(i)
        if not 0 <= i < n:
            raise DomainError(f"species index {i} outside 0..{n - 1}")
        mask |= 1 << i
    if mask == 0:
        raise DomainError("subset must be nonempty")
    return mask


def mask_members(mask: int) -> list[int]:
    return [i for i in range(mask.bit_length()) if mask >> i & 1]


def _lambda_mask(A: np.ndarray, beta: np.ndarray, mask: int) -> float:
    if mask == 0:
        return 0.0
    idx = mask_members(mask)
    b = beta[idx]
    return float(np.sum(b * (EIGHT_PI - A[np.ix_(idx, idx)] @ b)))


def lambda_subset(spec: InteractionSpec, J) -> float:
    """Criticality function of the subset ``J`` (0-based indices or a bitmask)."""
    return _lambda_mask(spec.A, spec.beta, subset_mask(J, spec.n))


def saturation_tolerance(beta) -> float:
    return 1e-12 * max(1.0, abs(EIGHT_PI * float(np.sum(beta))))


@dataclass(frozen=True)
class CriticalityVerdict:
    """Classification of a mass vector.

    ``lambda_table`` maps subset bitmasks to their criticality value;
    ``witnesses`` lists the masks that fail the admissibility condition
    (inadmissible) or that are saturated (critical, degenerate).
    """

    cls: str
    lambda_table: dict
    witnesses: tuple

    @property
    def is_admissible(self) -> bool:
        return self.cls != INADMISSIBLE


def classify(spec: InteractionSpec) -> CriticalityVerdict:
    """Enumerate all nonempty subsets and classify the mass vector.

    A saturated subset is one with ``|Lambda_J| <= tol``, where ``tol`` is
    ``1e-12 * max(1, 8 pi sum(beta))``. The empty subset has value zero.
    """
    n = spec.n
    if n > MAX_SPECIES_CLASSIFY:
        raise DomainError(f"refusing to enumerate 2^{n} subsets (n > {MAX_SPECIES_CLASSIFY})")
    A, beta = spec.A, spec.beta
    tol = saturation_tolerance(beta)
    full = (1 << n) - 1
    table = {mask: _lambda_mask(A, beta, mask) for mask in range(1, full + 1)}

    def snapped(mask):
        val = table.get(mask, 0.0)
        return 0.0 if abs(val) <= tol else val

    negative = [m for m in table if snapped(m) < 0]
    saturated = [m for m in table if snapped(m) == 0]
    bad_saturated = [
        m for m in saturated
        if any(A[i, i] + snapped(m & ~(1 << i)) <= 0 for i in mask_members(m))
    ]
    if negative or bad_saturated:
        return CriticalityVerdict(INADMISSIBLE, table, tuple(sorted(negative + bad_saturated)))
    if not saturated:
        return CriticalityVerdict(SUB_CRITICAL, table, ())
    if saturated == [full]:
        return CriticalityVerdict(CRITICAL, table, (full,))
    return CriticalityVerdict(DEGENERATE, table, tuple(sorted(saturated)))


def critical_scale(A, beta0, rtol=1e-14, t_max=None) -> float:
    """Smallest ``t > 0`` at which ``t * beta0`` stops being sub-critical.

    Located by bisection on :func:`classify`, so it is independent of any
    closed-form root of the full-set criticality function.
    """
    beta0 = np.asarray(beta0, dtype=float)

    def sub(t):
        return classify(InteractionSpec(A, t * beta0)).cls == SUB_CRITICAL

    lo = 0.0
    hi = 1.0 if t_max is None else float(t_max)
    while sub(hi):
        lo, hi = hi, 2.0 * hi
        if hi > 1e300:
            return np.inf
    while hi - lo > rtol * hi:
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if sub(mid):
            lo = mid
        else:
            hi = mid
    return hi


def drift_variance(v) -> tuple[float, np.ndarray]:
    """Minimal total squared distance of the points to a common point.

    Returns the value and its minimizer (the centroid).
    """
    v = np.asarray(v, dtype=float).reshape(-1, 2)
    if v.shape[0] == 0:
        raise DomainError("need at least one point")
    c = v.mean(axis=0)
    return float(np.sum((v - c) ** 2)), c


def weighted_drift_min(spec: InteractionSpec) -> tuple[float, np.ndarray]:
    """Minimum over x of sum_i beta_i |x - v_i|^2 / 2, at the mass-weighted centroid."""
    b = spec.beta
    x = (b[:, None] * spec.v).sum(axis=0) / b.sum()
    return float(0.5 * np.sum(b * np.sum((spec.v - x) ** 2, axis=1))), x
