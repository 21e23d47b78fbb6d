"""Stationary states (U_eps, V_eps) of the nonlocal road-field system.

The steady field profile solves the integro-differential problem

    -d V'' = f(V) + (mu_eps / mu_bar) * int nu_eps V - nu_eps V,

and the road value is U = int nu_eps V / mu_bar. Outside the kernel support
the profile follows the phase-plane orbit of -d V'' = f(V) into the saddle
(1, 0), which gives an exact nonlinear Robin closure at |y| = Y.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, InvalidParameter, NumericalFailure
from .linalg import ArrowheadSolver
from .model import ExchangeKernels, ModelParams, Reaction

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class StationaryNumerics:
    Y: float = 20.0
    N: int = 1001
    newton_tol: float = 1e-11
    max_iters: int = 60
    ratio: float = 1.05
    h_max: float = 0.1


@dataclass
class StationaryState:
    eps: float
    grid: np.ndarray
    V: np.ndarray
    U: float
    sup_dev: float
    residual: float = 0.0
    iterations: int = 0
    history: list = field(default_factory=list)


def phase_plane_slope(r: Reaction, d: float, value):
    """V' on the right-hand orbit through ``value`` that decays to 1.

    From -d V'' = f(V): d V'^2 = -2 F(V) with F(t) = int_1^t f, and the
    orbit entering the saddle from the right has V' = -sign(V - 1) |V'|.
    """
    g = _orbit_rate(r, d, np.asarray(value, dtype=float))
    out = -g
    return float(out) if np.ndim(out) == 0 else out


def _orbit_rate(r: Reaction, d: float, t):
    """g(t) = sign(t - 1) sqrt(-2 F(t) / d), analytic through t = 1."""
    lo, hi = r.clamp
    F = r.antiderivative(t)
    if np.any(F > 1e-15):
        raise DomainError("value lies on no orbit into the saddle (F > 0)")
    inside = (t >= max(lo, -0.5)) & (t <= hi)
    # logistic: -2 F(t) = (r/3) (t - 1)^2 (2 t + 1)
    core = (t - 1.0) * np.sqrt(np.maximum(r.f_prime0 * (2.0 * t + 1.0) / (3.0 * d), 0.0))
    generic = np.sign(t - 1.0) * np.sqrt(np.maximum(-2.0 * F, 0.0) / d)
    return np.where(inside, core, generic)


def _orbit_rate_prime(r: Reaction, d: float, t):
    s = np.sqrt(np.maximum(r.f_prime0 * (2.0 * t + 1.0) / (3.0 * d), 1e-300))
    core = s + (t - 1.0) * r.f_prime0 / (3.0 * d * s)
    g = _orbit_rate(r, d, t)
    with np.errstate(divide="ignore", invalid="ignore"):
        generic = np.where(g != 0, -r(t) / (d * g), math.sqrt(r.f_prime0 / d))
    lo, hi = r.clamp
    inside = (t >= max(lo, -0.5)) & (t <= hi)
    return np.where(inside, core, generic)


def stationary_grid(eps: float, Y: float, N: int = 1001, ratio: float = 1.05, h_max: float = 0.1):
    """Uniform N nodes on [-2 eps, 2 eps], geometric stretching out to +-Y."""
    core = np.linspace(-2.0 * eps, 2.0 * eps, N)
    h = core[1] - core[0]
    right = []
    y = 2.0 * eps
    while y < Y:
        h = min(h * ratio, h_max)
        y = y + h
        right.append(y)
    right = np.array(right)
    if len(right) and right[-1] > Y:
        right[-1] = Y
        if len(right) > 1 and Y - right[-2] < 0.5 * (right[-2] - (right[-3] if len(right) > 2 else 2 * eps)):
            right = np.delete(right, -2)
    return np.concatenate([-right[::-1], core, right])


def _cell_widths(y):
    w = np.empty_like(y)
    w[1:-1] = 0.5 * (y[2:] - y[:-2])
    w[0] = 0.5 * (y[1] - y[0])
    w[-1] = 0.5 * (y[-1] - y[-2])
    return w


class _Problem:
    def __init__(self, params, kernels, eps, grid):
        self.params = params
        self.reaction = params.reaction()
        self.y = grid
        self.hl = np.diff(grid)
        self.w = _cell_widths(grid)
        self.nu = kernels.nu.scaled(eps, grid)
        self.mu = kernels.mu.scaled(eps, grid)
        self.nu_w = self.w * self.nu
        self.mu_mass = float(np.dot(self.w, self.mu))
        if self.mu_mass <= 0:
            raise InvalidParameter("mu kernel is not resolved by the grid")

    def road(self, V):
        return float(np.dot(self.nu_w, V)) / self.mu_mass

    def residual(self, V):
        """Finite-volume residual: cell width times the pointwise equation."""
        d = self.params.d
        flux = d * np.diff(V) / self.hl
        diff = np.zeros_like(V)
        diff[:-1] += flux
        diff[1:] -= flux
        g = _orbit_rate(self.reaction, d, V[[0, -1]])
        diff[0] -= d * g[0]
        diff[-1] -= d * g[1]
        source = self.reaction(V) + self.mu * self.road(V) - self.nu * V
        return -diff - self.w * source

    def jacobian(self, V):
        d = self.params.d
        k = d / self.hl
        diag = np.zeros_like(V)
        diag[:-1] += k
        diag[1:] += k
        gp = _orbit_rate_prime(self.reaction, d, V[[0, -1]])
        diag[0] += d * gp[0]
        diag[-1] += d * gp[1]
        diag += self.w * (self.nu - self.reaction.derivative(V))
        off = -k
        col = -(self.w * self.mu) / self.mu_mass
        return ArrowheadSolver(off, diag, off, col, self.nu_w, -1.0)


def solve_stationary(
    params: ModelParams,
    kernels: ExchangeKernels,
    eps: float,
    numerics: StationaryNumerics | None = None,
) -> StationaryState:
    """Damped Newton for the stationary profile, starting from V = 1.

    The nonlocal term makes the Jacobian tridiagonal plus a rank-one
    coupling, solved exactly by bordered elimination.
    """
    numerics = numerics or StationaryNumerics()
    if not eps > 0:
        raise InvalidParameter("eps must be > 0")
    if numerics.Y < 10:
        raise InvalidParameter("Y must be >= 10")
    grid = stationary_grid(eps, numerics.Y, numerics.N, numerics.ratio, numerics.h_max)
    prob = _Problem(params, kernels, eps, grid)
    V = np.ones_like(grid)
    R = prob.residual(V)
    res = float(np.max(np.abs(R)))
    history = [res]
    it = 0
    lo, hi = prob.reaction.clamp
    while res > numerics.newton_tol and it < numerics.max_iters:
        it += 1
        step, _ = prob.jacobian(V).solve(-R, 0.0)
        t = 1.0
        while True:
            trial = V + t * step
            R_trial = prob.residual(trial)
            res_trial = float(np.max(np.abs(R_trial)))
            if res_trial < res or t <= 2.0**-10:
                break
            t *= 0.5
        if np.any(trial <= 0) or np.any(trial >= hi):
            log.warning("Newton iterate left (0, %g) at iteration %d", hi, it)
        if res_trial >= res and np.max(np.abs(t * step)) < 1e-14:
            break
        V, R, res = trial, R_trial, res_trial
        history.append(res)
    if res > numerics.newton_tol and (not np.isfinite(res) or res > 1e3 * numerics.newton_tol):
        raise NumericalFailure(
            "stationary Newton iteration did not converge",
            {"eps": eps, "residual_history": history},
        )
    return StationaryState(
        eps=float(eps), grid=grid, V=V, U=prob.road(V),
        sup_dev=float(np.max(np.abs(V - 1.0))), residual=res, iterations=it, history=history,
    )


@dataclass
class SweepRow:
    eps: float
    sup_dev: float = math.nan
    U: float = math.nan
    residual: float = math.nan
    iterations: int = 0
    V_min: float = math.nan
    V_max: float = math.nan
    failed: str | None = None


def stationary_convergence_sweep(params, kernels, eps_list, numerics=None):
    """One stationary solve per eps, rows in input order; failures are marked."""
    rows = []
    for eps in eps_list:
        try:
            st = solve_stationary(params, kernels, eps, numerics)
        except (NumericalFailure, InvalidParameter) as exc:
            rows.append(SweepRow(float(eps), failed=str(exc)))
            continue
        rows.append(SweepRow(
            st.eps, st.sup_dev, st.U, st.residual, st.iterations,
            float(st.V.min()), float(st.V.max()),
        ))
    return rows
