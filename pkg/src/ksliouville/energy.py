"""Free-energy functionals on gridded density tuples.

One evaluation path serves every variant: the drift-confined functional
(confinement weights 1/2), its generalization with arbitrary positive
weights ``alpha``, and the centered functional (``spec.centered()``).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .criticality import InteractionSpec, lambda_subset, weighted_drift_min
from .errors import DomainError
from .field import DensityField, dilate, entropy, second_moment
from .potential import PotentialField, interaction_energy, newtonian_potential

MASS_MATCH_RTOL = 1e-8


@dataclass(frozen=True)
class EnergyBreakdown:
    entropy_terms: np.ndarray
    interaction_term: float
    confinement_terms: np.ndarray
    total: float
    alpha: np.ndarray

    @property
    def entropy_total(self) -> float:
        return float(np.sum(self.entropy_terms))


def _check_masses(spec: InteractionSpec, field: DensityField):
    if field.n != spec.n:
        raise DomainError(f"field has {field.n} species, spec has {spec.n}")
    m = field.masses()
    if np.any(np.abs(m - spec.beta) > MASS_MATCH_RTOL * spec.beta):
        raise DomainError(f"field masses {m} do not match beta {spec.beta}")


def interaction_matrix(field: DensityField, pot: PotentialField | None = None) -> np.ndarray:
    """Symmetrized ``I_ij`` (average of the matrix and its transpose)."""
    if pot is None:
        pot = newtonian_potential(field)
    I = interaction_energy(field, pot)
    return 0.5 * (I + I.T)


def free_energy(spec: InteractionSpec, field: DensityField, alpha=None,
                pot: PotentialField | None = None) -> EnergyBreakdown:
    """Entropy + ``(1/4 pi) sum a_ij I_ij`` + ``sum alpha_i int |x - v_i|^2 rho_i``.

    ``alpha`` defaults to 1/2 for every species. A precomputed potential of
    ``field`` may be passed to skip the convolution.
    """
    _check_masses(spec, field)
    n = spec.n
    alpha = np.full(n, 0.5) if alpha is None else np.broadcast_to(np.asarray(alpha, float), (n,)).copy()
    if np.any(alpha <= 0):
        raise DomainError("confinement weights alpha must be positive")
    ent = np.array([entropy(field, i) for i in range(n)])
    I = interaction_matrix(field, pot)
    inter = float(np.sum(spec.A * I) / (4 * np.pi))
    conf = np.array([alpha[i] * second_moment(field, i, spec.v[i]) for i in range(n)])
    total = float(np.sum(ent) + inter + np.sum(conf))
    return EnergyBreakdown(ent, inter, conf, total, alpha)


def dilation_identity_check(spec: InteractionSpec, field: DensityField, R: float) -> tuple[float, float]:
    """Centered energy of the dilated field versus its predicted value.

    ``lhs = F_0(dilate(field, R))``;
    ``rhs = F_0(field) + Lambda_I ln(R) / 4 pi + (1/R^2 - 1) sum int |x|^2 rho_i / 2``.
    """
    spec0 = spec.centered()
    lhs = free_energy(spec0, dilate(field, R)).total
    full = (1 << spec.n) - 1
    m2 = sum(second_moment(field, i) for i in range(spec.n))
    rhs = (free_energy(spec0, field).total
           + lambda_subset(spec, full) / (4 * np.pi) * np.log(R)
           + (1.0 / R ** 2 - 1.0) * 0.5 * m2)
    return lhs, float(rhs)


def inequality_gap(spec: InteractionSpec, candidate_v_min: float, f0_min: float) -> float:
    """``f0_min + min_x sum beta_i |x - v_i|^2 / 2 - candidate_v_min``.

    Nonnegative whenever both inputs are (approximate) infima; a clearly
    negative gap signals a bug.
    """
    return float(f0_min + weighted_drift_min(spec)[0] - candidate_v_min)


def translation_expansion(spec: InteractionSpec, field: DensityField, x0) -> float:
    """Predicted ``F_v(translate(field, x0)) - F_0(field)``.

    Expanding ``|x + x0 - v_i|^2 - |x|^2`` gives
    ``sum_i int <x, x0 - v_i> rho_i + sum_i beta_i |x0 - v_i|^2 / 2``.
    """
    X, Y = field.grid.mesh
    x0 = np.asarray(x0, dtype=float)
    out = 0.0
    for i in range(spec.n):
        d = x0 - spec.v[i]
        rho = field.values[i]
        out += field.grid.cell_area * np.sum((X * d[0] + Y * d[1]) * rho)
        out += 0.5 * spec.beta[i] * float(d @ d)
    return float(out)


def virial_defect(spec: InteractionSpec, field: DensityField) -> tuple[float, float]:
    """Defect of the dilation (virial) identity at a candidate critical point.

    Differentiating the free energy along ``rho -> R^2 rho(p + R(x - p))`` at
    ``R = 1`` shows every critical point satisfies
    ``Lambda_I / 4 pi = sum_i int (x - p).(x - v_i) rho_i``.
    Returns ``(defect, ratio)`` where ``ratio`` divides ``|defect|`` by the
    total second moment of the species about their own centroids. ``p`` is
    the overall center of mass. With ``Lambda_I = 0`` and coincident drifts
    the ratio is 1 for any density, which is how grid-scale concentration
    shows up in a converged discrete fixed point.
    """
    X, Y = field.grid.mesh
    h2 = field.grid.cell_area
    rho = field.values
    m = rho.sum(axis=(1, 2))
    p = np.array([np.sum(X * rho), np.sum(Y * rho)]) / m.sum()
    full = (1 << spec.n) - 1
    virial, spread = 0.0, 0.0
    for i in range(spec.n):
        v = spec.v[i]
        virial += h2 * np.sum(((X - p[0]) * (X - v[0]) + (Y - p[1]) * (Y - v[1])) * rho[i])
        c = np.array([np.sum(X * rho[i]), np.sum(Y * rho[i])]) / m[i]
        spread += h2 * np.sum(((X - c[0]) ** 2 + (Y - c[1]) ** 2) * rho[i])
    defect = lambda_subset(spec, full) / (4 * np.pi) - virial
    return float(defect), float(abs(defect) / spread) if spread > 0 else np.inf
