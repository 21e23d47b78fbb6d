"""Linear travelling waves and spreading speeds.

A linear travelling wave e^{-lam (x - c t)} (1, phi(y)) exists when the
road parabola ``psi1(c, lam) = -D lam^2 + c lam + mu_bar`` meets the field
response ``psi2(c, lam)``. The field response is either closed form (local
limit) or the kernel-weighted mass of the solution of the exchange
boundary value problem

    -d phi'' + (P(lam) + delta + nu_eps) phi = mu_eps,

with P(lam) = lam c - d lam^2 - f'(0). The spreading speed is the first c
at which the two curves touch.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import lapack

from .errors import DomainError, InvalidParameter, NumericalFailure
from .linalg import solve_tridiagonal
from .model import ExchangeKernels, ModelParams

LAMBDA_SCAN = 512
GOLDEN_STEPS = 40
BISECT_MAX = 60
BVP_NODES = 2001

_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class Truncation:
    """Dirichlet truncation of the field at |y| = L plus a growth penalty delta."""

    L: float = math.inf
    delta: float = 0.0

    def __post_init__(self):
        if not self.L > 0:
            raise InvalidParameter("L must be > 0")
        if self.delta < 0:
            raise InvalidParameter("delta must be >= 0")

    @property
    def finite(self) -> bool:
        return math.isfinite(self.L)


@dataclass(frozen=True)
class Mode:
    """Which dispersion relation to solve.

    ``kind`` is ``"local-limit"``, ``"nonlocal"`` or ``"truncated"``;
    truncated with ``eps == 0`` is the truncated local problem.
    """

    kind: str = "local-limit"
    eps: float = 0.0
    L: float = math.inf
    delta: float = 0.0

    def __post_init__(self):
        if self.kind not in ("local-limit", "nonlocal", "truncated"):
            raise InvalidParameter(f"unknown mode {self.kind!r}")
        if self.kind == "nonlocal" and not self.eps > 0:
            raise InvalidParameter("eps must be > 0")
        if self.kind == "truncated":
            if self.eps < 0:
                raise InvalidParameter("eps must be >= 0")
            if not self.L > self.eps:
                raise InvalidParameter("L must exceed eps")
            if self.delta < 0:
                raise InvalidParameter("delta must be >= 0")

    @classmethod
    def local(cls):
        return cls("local-limit")

    @classmethod
    def nonlocal_(cls, eps):
        return cls("nonlocal", eps=eps)

    @classmethod
    def truncated(cls, eps, L, delta):
        return cls("truncated", eps=eps, L=L, delta=delta)

    @property
    def trunc(self) -> Truncation:
        if self.kind == "truncated":
            return Truncation(self.L, self.delta)
        return Truncation()

    @property
    def is_local(self) -> bool:
        return self.eps == 0


def P_of(params: ModelParams, c, lam):
    """P(lam) = lam c - d lam^2 - f'(0)."""
    return lam * c - params.d * lam**2 - params.f_prime0


@dataclass(frozen=True)
class SpectralPoint:
    c: float
    lam: float
    P: float

    @classmethod
    def at(cls, params: ModelParams, c: float, lam: float):
        return cls(float(c), float(lam), float(P_of(params, c, lam)))


def psi1(params: ModelParams, c, lam):
    """Road parabola -D lam^2 + c lam + mu_bar."""
    return -params.D * lam**2 + c * lam + params.mu_bar


def lambda2_bounds(params: ModelParams, c: float, delta: float = 0.0):
    """Roots of P(lam) + delta = 0, the admissible decay-rate interval."""
    f0 = params.f_prime0 - delta
    disc = c * c - 4.0 * params.d * f0
    if disc < 0:
        if disc > -1e-13 * c * c:
            disc = 0.0
        else:
            raise DomainError(f"c = {c!r} is below the field speed {2 * math.sqrt(params.d * f0)!r}")
    root = math.sqrt(disc)
    return (c - root) / (2.0 * params.d), (c + root) / (2.0 * params.d)


def _robin_rate(d, q, span):
    """Outward log-derivative magnitude of the exterior solution.

    The exterior solves -d phi'' + q phi = 0 on a half-line (span = inf) or
    on an interval of length ``span`` with phi = 0 at its far end.
    """
    q = np.asarray(q, dtype=float)
    kappa = np.sqrt(np.maximum(q, 0.0) / d)
    if math.isinf(span):
        return kappa
    x = kappa * span
    small = x < 1e-6
    with np.errstate(divide="ignore", invalid="ignore"):
        big = kappa / np.tanh(np.where(small, 1.0, x))
    return np.where(small, 1.0 / span + kappa**2 * span / 3.0, big)


def _check_q(q, finite):
    q = np.asarray(q, dtype=float)
    if np.any(q < 0) and np.min(q) < -1e-12:
        raise DomainError("P(lambda) + delta must be >= 0")
    return np.maximum(q, 0.0)


def psi2_local(params: ModelParams, c, lam, trunc: Truncation | None = None):
    """Closed-form field response of the local limit, nu_bar phi_0(0).

    For the untruncated problem phi_0(0) = mu_bar / (nu_bar + 2 sqrt(d P)).
    """
    trunc = trunc or Truncation()
    q = _check_q(P_of(params, c, lam) + trunc.delta, trunc.finite)
    rate = _robin_rate(params.d, q, trunc.L)
    out = params.nu_bar * params.mu_bar / (params.nu_bar + 2.0 * params.d * rate)
    return float(out) if np.ndim(out) == 0 else out


@dataclass
class PhiProfile:
    """Exchange profile phi(y) for one (eps, c, lam).

    ``grid`` holds the rescaled nodes z = y / eps on [-1, 1] and ``values``
    phi there. Outside (-eps, eps) phi is given in closed form: a pure
    exponential K e^{-kappa |y|} on the infinite line (``K_minus`` and
    ``K_plus`` are the tail amplitudes on each side), or a sinh profile
    vanishing at |y| = L when truncated. For ``eps == 0`` the grid is empty
    and phi(y) = K e^{-kappa |y|}.
    """

    eps: float
    grid: np.ndarray
    values: np.ndarray
    K_minus: float
    K_plus: float
    kappa: float
    L: float = math.inf
    asymmetric: bool = False

    @property
    def K(self) -> float:
        return 0.5 * (self.K_minus + self.K_plus)

    @property
    def at_zero(self) -> float:
        if self.eps == 0:
            return self.K
        return float(np.interp(0.0, self.grid, self.values))

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        a = np.abs(y)
        if self.eps == 0:
            edge = np.full_like(y, self.K)
        else:
            edge = np.where(y >= 0, self.values[-1], self.values[0])
        dist = np.maximum(a - self.eps, 0.0)
        k = self.kappa
        if math.isinf(self.L):
            tail = edge * np.exp(-k * dist)
        else:
            span = self.L - self.eps
            if k * span < 1e-8:
                tail = edge * np.maximum(span - dist, 0.0) / span
            else:
                tail = edge * np.sinh(k * np.maximum(span - dist, 0.0)) / np.sinh(k * span)
        if self.eps == 0:
            out = tail
        else:
            inner = np.interp(y / self.eps, self.grid, self.values)
            out = np.where(a <= self.eps, inner, tail)
        return float(out) if out.ndim == 0 else out


def _rescaled_system(params, kernels, eps, q, span, nodes):
    """Tridiagonal coefficients of the rescaled BVP for one value q = P + delta.

    On z in [-1, 1]:  -d psi'' + (eps^2 q + eps nu(z)) psi = eps mu(z),
    psi'(+-1) = -+ eps r psi(+-1), with r the exact exterior rate.
    """
    z = np.linspace(-1.0, 1.0, nodes)
    h = z[1] - z[0]
    nu = kernels.nu.profile(z)
    mu = kernels.mu.profile(z)
    r = float(_robin_rate(params.d, q, span))
    k = params.d / h**2
    diag = 2.0 * k + eps**2 * q + eps * nu
    diag[0] += 2.0 * k * h * eps * r
    diag[-1] += 2.0 * k * h * eps * r
    lower = np.full(nodes - 1, -k)
    upper = np.full(nodes - 1, -k)
    upper[0] = -2.0 * k
    lower[-1] = -2.0 * k
    return z, h, nu, lower, diag, upper, eps * mu


def _solve_rescaled(params, kernels, eps, q, span, nodes):
    z, h, nu, lower, diag, upper, rhs = _rescaled_system(params, kernels, eps, q, span, nodes)
    _, _, _, psi, info = lapack.dgtsv(lower, diag, upper, rhs)
    if info != 0:
        raise NumericalFailure("exchange BVP matrix is singular", {"info": int(info), "q": q})
    return z, h, nu, psi


def _trapezoid_weights(nodes, h):
    w = np.full(nodes, h)
    w[0] = w[-1] = 0.5 * h
    return w


def solve_phi_bvp(
    params: ModelParams,
    kernels: ExchangeKernels,
    eps: float,
    point: SpectralPoint,
    trunc: Truncation | None = None,
    nodes: int = BVP_NODES,
) -> PhiProfile:
    """Second-order finite-difference solution of the exchange BVP.

    The problem is posed in the rescaled variable z = y / eps, where the
    kernels are O(1). The exterior |y| > eps is eliminated exactly through
    Robin conditions, so the truncated case (phi(+-L) = 0) costs the same.
    """
    trunc = trunc or Truncation()
    if not eps > 0:
        raise InvalidParameter("eps must be > 0")
    q = point.P + trunc.delta
    if q < 0:
        raise DomainError("P(lambda) + delta must be >= 0")
    if trunc.finite and trunc.L <= eps:
        raise InvalidParameter("L must exceed eps")
    span = trunc.L - eps
    z, h, nu, psi = _solve_rescaled(params, kernels, eps, q, span, nodes)
    if not np.all(np.isfinite(psi)):
        raise NumericalFailure("non-finite exchange profile", {"q": q})
    kappa = math.sqrt(q / params.d)
    if trunc.finite:
        k_minus, k_plus = float(psi[0]), float(psi[-1])
    else:
        grow = math.exp(kappa * eps)
        k_minus, k_plus = float(psi[0]) * grow, float(psi[-1]) * grow
    return PhiProfile(
        eps=float(eps), grid=z, values=psi, K_minus=k_minus, K_plus=k_plus,
        kappa=kappa, L=trunc.L, asymmetric=not kernels.is_even,
    )


def local_phi(params: ModelParams, point: SpectralPoint, trunc: Truncation | None = None) -> PhiProfile:
    """Limit profile phi_0(y) = phi_0(0) e^{-sqrt(P/d) |y|}."""
    trunc = trunc or Truncation()
    q = point.P + trunc.delta
    if q < 0:
        raise DomainError("P(lambda) + delta must be >= 0")
    value = psi2_local(params, point.c, point.lam, trunc) / params.nu_bar
    return PhiProfile(
        eps=0.0, grid=np.empty(0), values=np.empty(0), K_minus=value, K_plus=value,
        kappa=math.sqrt(q / params.d), L=trunc.L,
    )


def _psi2_nonlocal_q(params, kernels, eps, q, span, nodes):
    z, h, nu, psi = _solve_rescaled(params, kernels, eps, q, span, nodes)
    return float(np.dot(_trapezoid_weights(nodes, h) * nu, psi))


def psi2_nonlocal(
    params: ModelParams,
    kernels: ExchangeKernels,
    eps: float,
    point: SpectralPoint,
    trunc: Truncation | None = None,
    nodes: int = BVP_NODES,
) -> float:
    """Field response: integral of nu_eps phi, by trapezoid in z."""
    trunc = trunc or Truncation()
    if not eps > 0:
        raise InvalidParameter("eps must be > 0")
    q = point.P + trunc.delta
    if q < 0:
        raise DomainError("P(lambda) + delta must be >= 0")
    return _psi2_nonlocal_q(params, kernels, eps, q, trunc.L - eps, nodes)


class _Response:
    """psi2 as a function of (c, lam) for a fixed mode."""

    def __init__(self, params, kernels, mode, nodes):
        self.params = params
        self.kernels = kernels
        self.mode = mode
        self.nodes = nodes
        self.trunc = mode.trunc

    def __call__(self, c, lam):
        q = np.maximum(P_of(self.params, c, np.asarray(lam, dtype=float)) + self.trunc.delta, 0.0)
        if self.mode.is_local:
            return np.asarray(psi2_local(self.params, c, lam, self.trunc))
        span = self.trunc.L - self.mode.eps
        flat = np.atleast_1d(q)
        out = np.array([
            _psi2_nonlocal_q(self.params, self.kernels, self.mode.eps, float(qi), span, self.nodes)
            for qi in flat
        ])
        return out.reshape(np.shape(q))

    def profile(self, c, lam):
        point = SpectralPoint.at(self.params, c, lam)
        if point.P + self.trunc.delta < 0:
            point = SpectralPoint(point.c, point.lam, -self.trunc.delta)
        if self.mode.is_local:
            return local_phi(self.params, point, self.trunc)
        return solve_phi_bvp(self.params, self.kernels, self.mode.eps, point, self.trunc, self.nodes)


def _gap(resp, c, lam):
    return psi1(resp.params, c, lam) - resp(c, lam)


def indicator(resp: _Response, c: float):
    """h(c) = max over admissible lam of psi1 - psi2, and its arg-max.

    Dense scan of the admissible interval, then golden-section refinement on
    the bracket around the best scan point. Ties go to the smallest lam.
    """
    lo, hi = lambda2_bounds(resp.params, c, resp.trunc.delta)
    if hi - lo <= 1e-14 * max(hi, 1.0):
        lam = 0.5 * (lo + hi)
        return float(_gap(resp, c, lam)), lam
    lams = np.linspace(lo, hi, LAMBDA_SCAN)
    vals = _gap(resp, c, lams)
    i = int(np.argmax(vals))
    best_val, best_lam = float(vals[i]), float(lams[i])
    a, b = lams[max(i - 1, 0)], lams[min(i + 1, LAMBDA_SCAN - 1)]
    x1 = b - _INVPHI * (b - a)
    x2 = a + _INVPHI * (b - a)
    f1 = float(_gap(resp, c, x1))
    f2 = float(_gap(resp, c, x2))
    for _ in range(GOLDEN_STEPS):
        if f1 >= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - _INVPHI * (b - a)
            f1 = float(_gap(resp, c, x1))
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + _INVPHI * (b - a)
            f2 = float(_gap(resp, c, x2))
    for val, lam in ((f1, x1), (f2, x2)):
        if val > best_val:
            best_val, best_lam = val, lam
    return best_val, best_lam


def envelope_speed(params: ModelParams):
    """Speed c_bar solving lambda2^-(c) = c / D, and lambda_bar = c_bar / D.

    Closed form: sqrt(c^2 - c_KPP^2) = c (1 - 2d/D).
    """
    if not params.road_enhanced:
        raise DomainError("envelope speed requires D > 2d")
    ratio = 1.0 - 2.0 * params.d / params.D
    c_bar = params.c_kpp / math.sqrt(1.0 - ratio * ratio)
    return c_bar, c_bar / params.D


@dataclass
class DispersionResult:
    c_star: float
    lambda_star: float
    phi_star: PhiProfile
    mode: Mode
    iterations: int = 0
    residual: float = 0.0
    diagnostics: dict = field(default_factory=dict)

    @property
    def phi0(self) -> float:
        return self.phi_star.at_zero


def find_speed(
    params: ModelParams,
    kernels: ExchangeKernels | None,
    mode: Mode,
    xtol: float | None = None,
    nodes: int = BVP_NODES,
    curve_samples: int = 0,
) -> DispersionResult:
    """Spreading speed as the first c where psi1 and psi2 touch.

    h(c) is increasing in c (psi1 increases and psi2 decreases with c, and
    the admissible interval widens), so the root of h is bracketed and
    bisected. For D <= 2d the untruncated problems return c_KPP directly.
    """
    if kernels is None:
        kernels = ExchangeKernels.default(params)
    resp = _Response(params, kernels, mode, nodes)
    delta = resp.trunc.delta
    c_lo = 2.0 * math.sqrt(params.d * (params.f_prime0 - delta))
    if delta >= params.f_prime0:
        raise InvalidParameter("delta must be below f'(0)")
    xtol = 1e-8 * params.c_kpp if xtol is None else xtol
    diagnostics: dict = {"asymmetric": not kernels.is_even and not mode.is_local}

    if mode.kind != "truncated" and not params.road_enhanced:
        lam = params.c_kpp / (2.0 * params.d)
        res = DispersionResult(
            params.c_kpp, lam, resp.profile(params.c_kpp, lam), mode,
            iterations=0, residual=0.0, diagnostics={**diagnostics, "closed_form": True},
        )
        _attach_curves(resp, res, curve_samples)
        return res

    h_lo, lam_lo = indicator(resp, c_lo)
    iterations = 0
    if h_lo >= 0:
        c_star, lam_star, h_star = c_lo, lam_lo, h_lo
    else:
        cap = envelope_speed(params)[0] if (not resp.trunc.finite and params.road_enhanced) else math.inf
        c_hi = c_lo
        while True:
            c_hi = min(2.0 * c_hi, cap)
            h_hi, lam_hi = indicator(resp, c_hi)
            iterations += 1
            if h_hi >= 0:
                break
            if c_hi >= cap or iterations > BISECT_MAX:
                raise NumericalFailure(
                    "no linear travelling wave found below the cap",
                    {"c_hi": c_hi, "h": h_hi, "cap": cap},
                )
            c_lo, h_lo = c_hi, h_hi
        while c_hi - c_lo > xtol and iterations < BISECT_MAX:
            mid = 0.5 * (c_lo + c_hi)
            h_mid, lam_mid = indicator(resp, mid)
            iterations += 1
            if h_mid >= 0:
                c_hi, h_hi, lam_hi = mid, h_mid, lam_mid
            else:
                c_lo, h_lo = mid, h_mid
        c_star, lam_star, h_star = c_hi, lam_hi, h_hi
        # secant polish inside the bracket to shrink the tangency residual
        for _ in range(4):
            if abs(h_star) <= 1e-11 * params.mu_bar or h_hi == h_lo:
                break
            trial = c_lo - h_lo * (c_hi - c_lo) / (h_hi - h_lo)
            if not c_lo < trial < c_hi:
                break
            h_t, lam_t = indicator(resp, trial)
            iterations += 1
            if h_t >= 0:
                c_hi, h_hi, lam_hi = trial, h_t, lam_t
            else:
                c_lo, h_lo = trial, h_t
            if abs(h_t) < abs(h_star):
                c_star, lam_star, h_star = trial, lam_t, h_t

    phi = resp.profile(c_star, lam_star)
    res = DispersionResult(
        float(c_star), float(lam_star), phi, mode,
        iterations=iterations, residual=float(abs(h_star)), diagnostics=diagnostics,
    )
    _attach_curves(resp, res, curve_samples)
    return res


def _attach_curves(resp, res, samples):
    if samples <= 0:
        return
    lo, hi = lambda2_bounds(resp.params, res.c_star, resp.trunc.delta)
    lams = np.linspace(lo, hi, samples)
    res.diagnostics["lambda"] = lams
    res.diagnostics["psi1"] = psi1(resp.params, res.c_star, lams)
    res.diagnostics["psi2"] = np.asarray(resp(res.c_star, lams), dtype=float)


def psi2_curve(params, kernels, mode: Mode, c, lams, nodes: int = BVP_NODES):
    """psi2 sampled along ``lams`` at speed c, for any mode."""
    return _Response(params, kernels or ExchangeKernels.default(params), mode, nodes)(c, lams)


# --- complex Helmholtz problem and the Kato comparison ----------------------


def _helmholtz_system(m, h, end_rates):
    n = len(m)
    k = 1.0 / h**2
    diag = 2.0 * k + np.asarray(m)
    diag = diag.astype(np.result_type(diag, np.asarray(end_rates)))
    diag[0] += 2.0 * k * h * end_rates[0]
    diag[-1] += 2.0 * k * h * end_rates[1]
    lower = np.full(n - 1, -k)
    upper = np.full(n - 1, -k)
    upper[0] = -2.0 * k
    lower[-1] = -2.0 * k
    return lower, diag, upper


def _uniform_step(grid):
    grid = np.asarray(grid, dtype=float)
    h = np.diff(grid)
    if len(grid) < 3 or not np.allclose(h, h[0], rtol=1e-9, atol=0):
        raise InvalidParameter("grid must be uniform with at least 3 nodes")
    return float(h[0])


def solve_helmholtz_complex(m, rhs, kappa: float, grid):
    """Solve -phi'' + m phi = rhs with complex potential m, Re m >= kappa^2.

    Decay at the grid ends is imposed through phi' = -+ sqrt(m) phi with
    the principal square root, i.e. the outgoing-decay Robin closure of a
    constant continuation of m.
    """
    m = np.asarray(m, dtype=complex)
    rhs = np.asarray(rhs, dtype=complex)
    if not kappa > 0:
        raise InvalidParameter("kappa must be > 0")
    if np.any(m.real < kappa**2):
        raise DomainError("Re(m) must be >= kappa^2 on the whole grid")
    h = _uniform_step(grid)
    rates = (np.sqrt(m[0]), np.sqrt(m[-1]))
    lower, diag, upper = _helmholtz_system(m, h, rates)
    return solve_tridiagonal(lower, diag, upper, rhs)


def kato_bound(rhs, kappa: float, grid):
    """Comparison profile w solving -w'' + kappa^2 w = |rhs| on the same grid.

    Every solution of the complex problem with Re m >= kappa^2 satisfies
    |phi| <= w pointwise; w itself is bounded by
    (1 / 2 kappa) * integral of exp(-kappa |y - z|) |rhs(z)| dz.
    """
    h = _uniform_step(grid)
    absf = np.abs(np.asarray(rhs))
    n = len(absf)
    lower, diag, upper = _helmholtz_system(np.full(n, kappa**2), h, (kappa, kappa))
    return solve_tridiagonal(lower, diag, upper, absf)
