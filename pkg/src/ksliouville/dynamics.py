"""Finite-volume evolution of the rescaled multi-species system.

Each species obeys

    d rho_i / dt = div( grad rho_i - rho_i grad phi_i ),
    phi_i = sum_j a_ij u_j - |x - v_i|^2 / 2,

with no-flux conditions on the truncated square. Face fluxes use the
exponentially fitted (Scharfetter-Gummel) form

    J = (B(-d) rho_k - B(d) rho_{k+1}) / h,   d = phi_{k+1} - phi_k,
    B(z) = z / (e^z - 1),

which reduces to centered diffusion for small ``d`` and to upwinding for
large ``d``. Its zero-flux states are exactly ``rho ~ exp(phi)`` on the
grid, so the discrete steady states coincide with the fixed points of the
Gibbs map. Forward Euler in time keeps the scheme conservative and, under
the step bound below, positive.

The self-similar change of variables ``rho(x, t) = rho_bar(x / sqrt(2t),
ln(2t) / 2) / (2t)`` links this system to the original unrescaled one.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy import ndimage

from .criticality import InteractionSpec
from .energy import free_energy
from .errors import BlowUp, CFLError, DomainError
from .field import DensityField, Grid2D, centroid, second_moment
from .minimizer import concentration_thresholds, gibbs_exponent, gibbs_map, l1_distance
from .potential import newtonian_potential

log = logging.getLogger(__name__)

CFL = 0.4
POSITIVITY_SAFETY = 0.9
TRACE_POINTS = 200


def bernoulli(z):
    """``B(z) = z / (e^z - 1)`` with ``B(0) = 1``."""
    z = np.asarray(z, dtype=float)
    small = np.abs(z) < 1e-8
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        out = z / np.expm1(np.where(small, 1.0, z))
    out = np.where(small, 1.0 - 0.5 * z, out)
    # z -> +inf: B -> 0; expm1 overflow gives z / inf = 0 already
    return np.where(np.isnan(out), 0.0, out)


@dataclass
class EvolutionState:
    field: DensityField
    time: float = 0.0
    dt: float = 0.0
    dissipation_trace: list = dc_field(default_factory=list)
    """``(time, F_v, dissipation)`` samples."""
    steps: int = 0
    diagnostics: list = dc_field(default_factory=list)
    """Per-sample entropy, second moments, fixed-point residual, peak density."""


@dataclass
class EvolveOptions:
    dt: float | None = None
    """Fixed step; ``None`` recomputes the admissible step every step."""
    cfl: float = CFL
    trace_every: int | None = None
    blowup_factor: float = 100.0

    def __post_init__(self):
        if self.dt is not None and not self.dt > 0:
            raise DomainError("dt must be positive")
        if not 0 < self.cfl <= 1:
            raise DomainError("cfl must lie in (0, 1]")


def _face_differences(phi):
    return phi[:, 1:, :] - phi[:, :-1, :], phi[:, :, 1:] - phi[:, :, :-1]


def _fluxes(rho, dx, dy, h):
    """Face fluxes (times ``h``) along both axes."""
    Jx = bernoulli(-dx) * rho[:, :-1, :] - bernoulli(dx) * rho[:, 1:, :]
    Jy = bernoulli(-dy) * rho[:, :, :-1] - bernoulli(dy) * rho[:, :, 1:]
    return Jx / h, Jy / h


def _outflow_rate(dx, dy, h):
    """Per-cell coefficient of ``rho_k`` in its own outflow, times ``h^2``."""
    out = np.zeros((dx.shape[0],) + (dx.shape[1] + 1, dx.shape[2]))
    out[:, :-1, :] += bernoulli(-dx)
    out[:, 1:, :] += bernoulli(dx)
    out[:, :, :-1] += bernoulli(-dy)
    out[:, :, 1:] += bernoulli(dy)
    return out / (h * h)


def _state_quantities(spec, field):
    pot = newtonian_potential(field)
    phi = gibbs_exponent(spec, pot)
    dx, dy = _face_differences(phi)
    return pot, phi, dx, dy


def _admissible(h, dx, dy, cfl):
    vmax = max(np.abs(dx).max(initial=0.0), np.abs(dy).max(initial=0.0)) / h
    rule = cfl * min(h * h / 4, h / vmax if vmax > 0 else np.inf)
    hard = 1.0 / _outflow_rate(dx, dy, h).max()
    return min(rule, POSITIVITY_SAFETY * hard), hard


def admissible_dt(spec: InteractionSpec, field: DensityField, cfl: float = CFL) -> float:
    """``min(cfl * min(h^2/4, h/max|velocity|), 0.9 * positivity bound)``."""
    _, _, dx, dy = _state_quantities(spec, field)
    return _admissible(field.grid.h, dx, dy, cfl)[0]


def _advance(field, dx, dy, dt):
    h = field.grid.h
    rho = field.values
    Jx, Jy = _fluxes(rho, dx, dy, h)
    div = np.zeros_like(rho)
    div[:, :-1, :] += Jx
    div[:, 1:, :] -= Jx
    div[:, :, :-1] += Jy
    div[:, :, 1:] -= Jy
    new = rho - (dt / h) * div
    # roundoff can leave -1e-17 where a cell drains exactly
    new = np.where(new < 0, 0.0, new)
    return DensityField(field.grid, new, field.target_mass)


def dissipation(field: DensityField, phi) -> float:
    """Discrete entropy production ``sum_faces h J (mu_k - mu_{k+1})``, ``mu = ln rho - phi``."""
    h = field.grid.h
    rho = field.values
    dx, dy = _face_differences(phi)
    Jx, Jy = _fluxes(rho, dx, dy, h)
    total = 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        mu = np.log(rho) - phi
        pairs = ((Jx, mu[:, :-1, :] - mu[:, 1:, :]), (Jy, mu[:, :, :-1] - mu[:, :, 1:]))
    # faces touching an empty cell carry no entropy production
    for J, dmu in pairs:
        ok = np.isfinite(dmu)
        total += float(np.sum(J[ok] * dmu[ok]))
    return h * total


def step(spec: InteractionSpec, state: EvolutionState, dt: float | None = None) -> EvolutionState:
    """One forward-Euler step of the fitted-flux scheme.

    Raises :class:`CFLError` (carrying the admissible step) if ``dt``
    exceeds the positivity bound of the current state.
    """
    field = state.field
    _, _, dx, dy = _state_quantities(spec, field)
    adm, hard = _admissible(field.grid.h, dx, dy, CFL)
    if dt is None:
        dt = adm
    if dt > hard:
        raise CFLError(f"dt={dt:.3g} exceeds the positivity bound {hard:.3g}", admissible_dt=adm)
    new = _advance(field, dx, dy, dt)
    return EvolutionState(new, state.time + dt, dt, list(state.dissipation_trace), state.steps + 1,
                          list(state.diagnostics))


def evolve(spec: InteractionSpec, initial: DensityField, t_end: float,
           options: EvolveOptions | None = None) -> EvolutionState:
    """Step from ``t = 0`` to ``t_end``.

    The trace records ``(time, F_v, dissipation)`` every
    ``max(1, floor(t_end / dt0 / 200))`` steps and at the end. Raises
    :class:`BlowUp` (with the last state) once the peak density exceeds
    ``blowup_factor * 0.1 / h^2``.
    """
    opts = options or EvolveOptions()
    if not t_end > 0:
        raise DomainError("t_end must be positive")
    rho = initial.normalized(spec.beta)
    grid = rho.grid
    _, rho_cap = concentration_thresholds(grid, spec.beta)
    sentinel = opts.blowup_factor * rho_cap
    h = grid.h

    pot, phi, dx, dy = _state_quantities(spec, rho)
    adm, hard = _admissible(h, dx, dy, opts.cfl)
    dt0 = opts.dt or adm
    every = opts.trace_every or max(1, int(t_end / dt0 / TRACE_POINTS))
    state = EvolutionState(rho, 0.0, dt0)

    def record(st, pot, phi):
        f = st.field
        E = free_energy(spec, f, pot=pot)
        st.dissipation_trace.append((st.time, E.total, dissipation(f, phi)))
        st.diagnostics.append({
            "entropy": E.entropy_total,
            "second_moments": [second_moment(f, i, centroid(f, i)) for i in range(f.n)],
            "residual": l1_distance(gibbs_map(spec, f, pot), f),
            "max_density": float(f.values.max()),
        })

    record(state, pot, phi)
    k = 0
    while state.time < t_end * (1 - 1e-14):
        if opts.dt is None:
            dt = adm
        else:
            dt = opts.dt
            if dt > hard:
                raise CFLError(f"dt={dt:.3g} exceeds the positivity bound {hard:.3g}", admissible_dt=adm)
        dt = min(dt, t_end - state.time)
        new = _advance(state.field, dx, dy, dt)
        k += 1
        state = EvolutionState(new, state.time + dt, dt, state.dissipation_trace, k, state.diagnostics)
        peak = float(new.values.max())
        if peak > sentinel:
            log.info("blow-up sentinel at t=%.4g (peak %.3g)", state.time, peak)
            raise BlowUp(f"peak density {peak:.3g} exceeds {sentinel:.3g} at t={state.time:.4g}", state=state)
        pot, phi, dx, dy = _state_quantities(spec, new)
        adm, hard = _admissible(h, dx, dy, opts.cfl)
        if k % every == 0 or state.time >= t_end * (1 - 1e-14):
            record(state, pot, phi)
    if state.dissipation_trace[-1][0] != state.time:
        record(state, pot, phi)
    return state


# self-similar variables

def log_time(t: float) -> float:
    """Rescaled time ``tau = ln(2t) / 2``."""
    if not t > 0:
        raise DomainError("self-similar variables need t > 0")
    return 0.5 * np.log(2 * t)


def time_from_log(tau: float) -> float:
    return 0.5 * np.exp(2 * tau)


def to_rescaled(sampler, t: float):
    """Sampler of ``rho_bar(y) = 2t rho(sqrt(2t) y)`` from a sampler of ``rho(., t)``."""
    log_time(t)
    s = np.sqrt(2 * t)
    return lambda X, Y: 2 * t * np.asarray(sampler(s * X, s * Y))


def to_original(sampler, t: float):
    """Sampler of ``rho(x, t) = rho_bar(x / sqrt(2t)) / 2t`` from a sampler of ``rho_bar``."""
    log_time(t)
    s = np.sqrt(2 * t)
    return lambda X, Y: np.asarray(sampler(X / s, Y / s)) / (2 * t)


def field_sampler(field: DensityField):
    """Bilinear sampler of a field (zero outside the domain), shape ``(n, ...)``."""
    g = field.grid

    def f(X, Y):
        X, Y = np.broadcast_arrays(np.asarray(X, float), np.asarray(Y, float))
        ia, ib = (X + g.L) / g.h - 0.5, (Y + g.L) / g.h - 0.5
        return np.stack([ndimage.map_coordinates(v, [ia, ib], order=1, mode="grid-constant", cval=0.0)
                         for v in field.values])
    return f


def scaled_grid(grid: Grid2D, t: float) -> Grid2D:
    """Grid whose cell centers are those of ``grid`` stretched by ``sqrt(2t)``."""
    log_time(t)
    return Grid2D(grid.L * np.sqrt(2 * t), grid.N)


def selfsim_transform(original_sampler, t: float, grid: Grid2D) -> DensityField:
    """Rescaled-frame field on ``grid`` from the original density at time ``t``."""
    return DensityField(grid, to_rescaled(original_sampler, t)(*grid.mesh))


def inverse_selfsim_transform(rescaled_sampler, t: float, grid: Grid2D) -> DensityField:
    """Original-frame field at time ``t`` on ``grid`` from a rescaled density."""
    return DensityField(grid, to_original(rescaled_sampler, t)(*grid.mesh))
