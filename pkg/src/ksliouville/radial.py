"""Radially symmetric Liouville system with quadratic confinement.

With all drift centers at the origin, the steady densities are
``rho_i = exp(sum_j a_ij u_j - r^2/2 + const_i)`` and the cumulative masses
``w_i(s) = m_i(e^s) = 2 pi int_0^{e^s} t rho_i(t) dt`` obey the autonomous
system

    w_i'' = w_i' (2 - (1/2 pi) sum_j a_ij w_j - e^{2s}),

(the chain rule gives ``r^2 = e^{2s}``). Near ``s -> -inf`` the densities
are locally constant, ``w_i ~ pi e^{2s + c_i}`` with ``c_i = ln rho_i(0)``.
The unknown center log-densities ``c_i`` are found by shooting so that
``w_i(s_max) = beta_i``. Only the ratios of the normalization constants
matter in this formulation, so no invertibility of ``A`` is needed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import simpson, solve_ivp

from .criticality import SUB_CRITICAL, InteractionSpec, classify, lambda_subset
from .errors import ConvergenceError, DomainError

S_MIN = -12.0
S_MAX = 3.0
NUM_S = 4096


@dataclass(frozen=True, eq=False)
class RadialProfile:
    """Cumulative mass profiles on a uniform grid in ``s = ln r``.

    ``w[i]`` and ``dw[i]`` hold ``w_i`` and ``w_i'`` at ``s``;
    ``log_center_density[i]`` is ``ln rho_i(0)``.
    """

    s: np.ndarray
    w: np.ndarray
    dw: np.ndarray
    log_center_density: np.ndarray
    beta: np.ndarray
    A: np.ndarray
    shooting_residual: float = 0.0

    @property
    def r(self) -> np.ndarray:
        return np.exp(self.s)

    def density(self) -> np.ndarray:
        """``rho_i(r) = w_i'(s) / (2 pi r^2)`` on the profile grid."""
        return self.dw / (2 * np.pi * np.exp(2 * self.s))

    def mass_within(self, r) -> np.ndarray:
        """``m_i(r)`` by interpolation in ``s`` (shape ``(n, len(r))``)."""
        s = np.log(np.atleast_1d(np.asarray(r, dtype=float)))
        return np.stack([np.interp(s, self.s, wi) for wi in self.w])

    def density_at(self, r) -> np.ndarray:
        """``rho_i`` at arbitrary radii; the center value below ``e^{s_min}``."""
        r = np.atleast_1d(np.asarray(r, dtype=float))
        rho = self.density()
        s = np.log(np.maximum(r, np.exp(self.s[0])))
        out = np.stack([np.interp(s, self.s, ri, right=0.0) for ri in rho])
        return out

    @property
    def u0(self) -> np.ndarray:
        """Center potentials ``u_i(0) = -(1/2 pi) int ln r dm_i = -(1/2 pi) int s w_i' ds``."""
        return -simpson(self.s * self.dw, x=self.s, axis=-1) / (2 * np.pi)


def _rhs(A):
    def f(s, y):
        n = A.shape[0]
        w, p = y[:n], y[n:]
        return np.concatenate([p, p * (2.0 - A @ w / (2 * np.pi) - np.exp(2 * s))])
    return f


def integrate_profile(A, c, s_grid, rtol=1e-10):
    """Integrate from the vacuum asymptotics at ``s_grid[0]``; returns ``(w, dw)``."""
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    s0 = s_grid[0]
    w0 = np.pi * np.exp(2 * s0 + np.asarray(c, dtype=float))
    y0 = np.concatenate([w0, 2 * w0])
    sol = solve_ivp(_rhs(A), (s0, s_grid[-1]), y0, method="RK45", t_eval=s_grid,
                    rtol=rtol, atol=1e-22)
    if not sol.success:
        raise ConvergenceError(f"radial integration failed: {sol.message}")
    # w' keeps its initial sign exactly; dense output can dip to -1e-22 in the tail
    return sol.y[:n], np.maximum(sol.y[n:], 0.0)


def solve_radial(spec: InteractionSpec, s_min: float = S_MIN, s_max: float = S_MAX,
                 num: int = NUM_S, tol: float = 1e-12, max_iter: int = 60,
                 rtol: float = 1e-10, require_subcritical: bool = True) -> RadialProfile:
    """Shoot on the center log-densities until ``w_i(s_max) = beta_i``.

    Damped Newton with a finite-difference Jacobian, started from the
    decoupled Gaussian values ``c_i = ln(beta_i / 2 pi)``. ``tol`` bounds
    ``max_i |w_i(s_max) / beta_i - 1|``.
    """
    if np.any(spec.v != 0):
        raise DomainError("radial solver needs every drift center at the origin")
    if require_subcritical:
        cls = classify(spec).cls
        if cls != SUB_CRITICAL:
            raise DomainError(f"no radial solution is sought outside the sub-critical regime ({cls})")
    A, beta = spec.A, spec.beta
    n = spec.n
    s_grid = np.linspace(s_min, s_max, num)

    def F(c):
        w, dw = integrate_profile(A, c, s_grid, rtol)
        return w[:, -1] / beta - 1.0, w, dw

    c = np.log(beta / (2 * np.pi))
    Fc, w, dw = F(c)
    best = np.max(np.abs(Fc))
    for _ in range(max_iter):
        if best <= tol:
            break
        J = np.empty((n, n))
        eps = 1e-6
        for k in range(n):
            dc = np.zeros(n)
            dc[k] = eps
            J[:, k] = (F(c + dc)[0] - Fc) / eps
        step = np.linalg.solve(J, -Fc)
        step = np.clip(step, -2.0, 2.0)
        lam = 1.0
        while True:
            cn = c + lam * step
            Fn, wn, dwn = F(cn)
            nn = np.max(np.abs(Fn))
            if nn < best or lam < 1e-3:
                break
            lam *= 0.5
        if nn >= best:
            break
        c, Fc, w, dw, best = cn, Fn, wn, dwn, nn
    if best > max(tol, 1e-9):
        raise ConvergenceError(f"shooting residual {best:.3g} above tolerance", best_residual=best)
    return RadialProfile(s_grid, w, dw, c, beta.copy(), A.copy(), best)


def _d1_4th(f, ds):
    """Fourth-order first derivative along the last axis (one-sided at the ends)."""
    d = np.empty_like(f)
    d[..., 2:-2] = (f[..., :-4] - 8 * f[..., 1:-3] + 8 * f[..., 3:-1] - f[..., 4:]) / (12 * ds)
    d[..., :2] = (-25 * f[..., 0:2] + 48 * f[..., 1:3] - 36 * f[..., 2:4]
                  + 16 * f[..., 3:5] - 3 * f[..., 4:6]) / (12 * ds)
    d[..., -2:] = (25 * f[..., -2:] - 48 * f[..., -3:-1] + 36 * f[..., -4:-2]
                   - 16 * f[..., -5:-3] + 3 * f[..., -6:-4]) / (12 * ds)
    return d


def ode_residual(profile: RadialProfile) -> float:
    """Max-norm residual of the cumulative-mass ODE, relative to ``max |w'|``.

    ``w''`` is taken as a fourth-order finite difference of the stored
    ``w'``, independent of the right-hand side used by the integrator; the
    consistency of ``w'`` with a difference of ``w`` is folded in as well.
    """
    s, w, dw = profile.s, profile.w, profile.dw
    ds = s[1] - s[0]
    bracket = 2.0 - profile.A @ w / (2 * np.pi) - np.exp(2 * s)
    r1 = np.max(np.abs(_d1_4th(dw, ds) - dw * bracket))
    r0 = np.max(np.abs(_d1_4th(w, ds) - dw))
    return float(max(r0, r1) / np.max(np.abs(dw)))


def mass_balance(profile: RadialProfile, spec: InteractionSpec | None = None) -> tuple[float, float]:
    """Both sides of ``2 sum beta - (1/4 pi) sum a_ij beta_i beta_j = sum int e^{2s} w_i' ds``.

    The left side equals ``Lambda_I / 4 pi``; the right side is the total
    second moment. Masses come from the profile and couplings from ``spec``
    when given (otherwise from the profile).
    """
    A = profile.A if spec is None else spec.A
    beta = profile.beta
    lhs = float(2 * beta.sum() - beta @ A @ beta / (4 * np.pi))
    rhs = float(np.sum(simpson(np.exp(2 * profile.s) * profile.dw, x=profile.s, axis=-1)))
    return lhs, rhs


def asymptotics_check(profile: RadialProfile, spec: InteractionSpec | None = None,
                      radius: float | None = None) -> np.ndarray:
    """Per-species ``(beta_i - m_i(R)) R^2``, with ``R = e^{s_max}`` by default.

    At the default radius the value is limited by the shooting accuracy.
    An interior ``radius`` measures the physical tail instead; it shrinks as
    the mass moves into the core near criticality.
    """
    beta = profile.beta if spec is None else spec.beta
    if radius is None:
        return (beta - profile.w[:, -1]) * np.exp(2 * profile.s[-1])
    return (beta - profile.mass_within(radius)[:, 0]) * radius ** 2


def lambda_over_4pi(spec: InteractionSpec) -> float:
    return lambda_subset(spec, (1 << spec.n) - 1) / (4 * np.pi)
