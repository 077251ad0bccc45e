"""Free-energy descent by damped Gibbs fixed-point iteration.

The Gibbs map sends a density tuple to the normalized Boltzmann factors of
its own mean field,

    G_i(rho) = beta_i exp(phi_i) / int exp(phi_i),
    phi_i = sum_j a_ij u_j - |x - v_i|^2 / 2,

whose fixed points are the discrete solutions of the modified Liouville
system. ``G(rho) - rho`` is a descent direction for the free energy, so the
relaxed iteration ``rho <- (1 - theta) rho + theta G(rho)`` with backtracking
on ``theta`` decreases the energy monotonically.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field as dc_field

import numpy as np

from .criticality import CRITICAL, SUB_CRITICAL, InteractionSpec, classify
from .energy import EnergyBreakdown, free_energy, virial_defect
from .errors import ConcentrationOverflow, DomainError
from .field import DensityField, Grid2D, centroid, second_moment
from .potential import PotentialField, newtonian_potential

log = logging.getLogger(__name__)

MINIMIZER = "minimizer"
CONCENTRATION = "concentration"
BUDGET = "budget-exhausted"

MAX_EXPONENT = 700.0


def concentration_thresholds(grid: Grid2D, beta) -> tuple[float, float]:
    """``(eps_conc, rho_cap) = (4 h^2 sum(beta), 0.1 / h^2)``."""
    h2 = grid.cell_area
    return 4 * h2 * float(np.sum(beta)), 0.1 / h2


def gibbs_exponent(spec: InteractionSpec, pot: PotentialField) -> np.ndarray:
    grid = pot.grid
    phi = np.tensordot(spec.A, pot.values, axes=1)
    return np.stack([phi[i] - 0.5 * grid.dist2(spec.v[i]) for i in range(spec.n)])


def gibbs_map(spec: InteractionSpec, field: DensityField, pot: PotentialField | None = None) -> DensityField:
    """Normalized Boltzmann factors of the mean field of ``field``.

    Raises :class:`ConcentrationOverflow` if the exponent exceeds 700.
    """
    if pot is None:
        pot = newtonian_potential(field)
    phi = gibbs_exponent(spec, pot)
    top = phi.max(axis=(1, 2))
    if np.any(top > MAX_EXPONENT):
        raise ConcentrationOverflow(f"Gibbs exponent {top.max():.3g} exceeds {MAX_EXPONENT}")
    w = np.exp(phi - top[:, None, None])
    Z = field.grid.integrate(w)
    return DensityField(field.grid, w * (spec.beta / Z)[:, None, None], spec.beta)


def l1_distance(a: DensityField, b: DensityField) -> float:
    return float(a.grid.cell_area * np.sum(np.abs(a.values - b.values)))


def residual(spec: InteractionSpec, field: DensityField) -> float:
    """``sum_i ||G_i(rho) - rho_i||_L1``."""
    return l1_distance(gibbs_map(spec, field), field)


@dataclass
class MinimizeOptions:
    theta0: float = 0.5
    theta_min: float = 1e-4
    tol_fp: float = 1e-8
    """Fixed-point tolerance relative to ``sum(beta)``."""
    max_iter: int = 5000
    burn_in: int = 0
    virial_tol: float = 0.5
    """Converged fixed points whose virial defect ratio exceeds this are
    grid-scale concentration, not resolved minimizers."""
    accept_rtol: float = 1e-12
    check_class: bool = True

    def __post_init__(self):
        if not (0 < self.theta_min <= self.theta0 <= 1):
            raise DomainError("need 0 < theta_min <= theta0 <= 1")
        if self.tol_fp <= 0 or self.max_iter < 1:
            raise DomainError("tol_fp must be positive and max_iter >= 1")


@dataclass
class MinimizeReport:
    verdict: str
    final_field: DensityField
    energy_trace: list = dc_field(default_factory=list)
    diagnostics: list = dc_field(default_factory=list)
    final_energy: EnergyBreakdown | None = None
    residual: float = np.inf
    iterations: int = 0

    @property
    def energy(self) -> float:
        return self.final_energy.total


def _diagnostics(k, field, energy: EnergyBreakdown, res, theta):
    n = field.n
    cents = [centroid(field, i) for i in range(n)]
    return {
        "iter": k,
        "energy": energy.total,
        "entropy": energy.entropy_total,
        "second_moments": [second_moment(field, i, cents[i]) for i in range(n)],
        "max_density": float(field.values.max()),
        "residual": res,
        "theta": theta,
    }


def minimize(spec: InteractionSpec, initial: DensityField | None = None,
             options: MinimizeOptions | None = None, grid: Grid2D | None = None) -> MinimizeReport:
    """Descend the free energy from ``initial`` until a verdict is reached.

    Verdicts:

    ``concentration``
        the peak density exceeds ``0.1 / h^2`` and either some species'
        second moment about its centroid falls below ``4 h^2 sum(beta)``
        during the descent, or the iteration converged to a fixed point whose
        virial defect ratio exceeds ``virial_tol`` (a grid-scale bubble that
        is not a resolved critical point).
    ``minimizer``
        fixed-point residual below ``tol_fp * sum(beta)`` otherwise.
    ``budget-exhausted``
        iteration budget spent, or no energy-decreasing step down to
        ``theta_min``.

    The default initial field is the Gaussian tuple centered at the drifts.
    """
    opts = options or MinimizeOptions()
    if opts.check_class:
        cls = classify(spec).cls
        if cls not in (SUB_CRITICAL, CRITICAL):
            raise DomainError(f"minimize needs a sub-critical or critical spec, got {cls}")
    if initial is None:
        initial = DensityField.gaussians(grid or Grid2D(), spec.beta, spec.v)
    rho = initial.normalized(spec.beta)
    g = rho.grid
    eps_conc, rho_cap = concentration_thresholds(g, spec.beta)
    tol = opts.tol_fp * float(np.sum(spec.beta))

    pot = newtonian_potential(rho)
    E = free_energy(spec, rho, pot=pot)
    trace, diags = [E.total], []
    verdict, res = BUDGET, np.inf

    for k in range(opts.max_iter):
        G = gibbs_map(spec, rho, pot)
        res = l1_distance(G, rho)
        d = _diagnostics(k, rho, E, res, None)
        diags.append(d)
        if min(d["second_moments"]) < eps_conc and d["max_density"] > rho_cap:
            verdict = CONCENTRATION
            break
        if res <= tol:
            _, ratio = virial_defect(spec, rho)
            d["virial_ratio"] = ratio
            if ratio > opts.virial_tol and d["max_density"] > rho_cap:
                verdict = CONCENTRATION
            else:
                verdict = MINIMIZER
            break
        potG = newtonian_potential(G)
        theta = opts.theta0
        while True:
            cand = DensityField(g, (1 - theta) * rho.values + theta * G.values, spec.beta)
            cpot = pot.combine(potG, theta)
            Ec = free_energy(spec, cand, pot=cpot)
            if Ec.total <= E.total + opts.accept_rtol * (1 + abs(E.total)) or k < opts.burn_in:
                break
            theta *= 0.5
            if theta < opts.theta_min:
                cand = None
                break
        if cand is None:
            log.info("no descent step above theta_min at iteration %d (residual %.3g)", k, res)
            break
        d["theta"] = theta
        rho, pot, E = cand, cpot, Ec
        trace.append(E.total)
    else:
        k = opts.max_iter

    return MinimizeReport(verdict, rho, trace, diags, E, res, k)


def approach_sequence(beta, m_values) -> list[np.ndarray]:
    """Masses ``(1 - 2^-m) beta`` approaching ``beta`` from below."""
    beta = np.asarray(beta, dtype=float)
    return [(1 - 2.0 ** (-m)) * beta for m in m_values]
