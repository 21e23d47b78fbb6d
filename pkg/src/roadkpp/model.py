"""Problem instances: physical constants, exchange kernels, KPP reaction."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .errors import InvalidParameter

KERNEL_SHAPES = ("cos2", "cos4", "shifted")

# asymmetric bump: centre and half-width inside (-1, 1)
_SHIFT_CENTER = 0.3
_SHIFT_HALF = 0.6


@dataclass(frozen=True)
class ModelParams:
    """Physical constants of the road-field system.

    ``D`` and ``d`` are the road and field diffusivities, ``mu_bar`` and
    ``nu_bar`` the total jump-off and jump-on rates, ``f_prime0`` the
    linear growth rate of the field population.
    """

    D: float = 5.0
    d: float = 1.0
    mu_bar: float = 1.0
    nu_bar: float = 1.0
    f_prime0: float = 1.0

    def __post_init__(self):
        for name in ("D", "d", "mu_bar", "nu_bar", "f_prime0"):
            value = getattr(self, name)
            if not isinstance(value, (int, float)) or not math.isfinite(value):
                raise InvalidParameter(f"{name} must be a finite number")
            if value <= 0:
                raise InvalidParameter(f"{name} must be > 0")

    @property
    def c_kpp(self) -> float:
        """Field-only spreading speed 2 sqrt(d f'(0))."""
        return 2.0 * math.sqrt(self.d * self.f_prime0)

    @property
    def road_enhanced(self) -> bool:
        """True when the road speeds up propagation (D > 2d)."""
        return self.D > 2.0 * self.d

    @property
    def steady_road(self) -> float:
        """Road density of the limit steady state, nu_bar / mu_bar."""
        return self.nu_bar / self.mu_bar

    def reaction(self) -> "Reaction":
        return Reaction(f_prime0=self.f_prime0)


def _shape(name: str, z):
    z = np.asarray(z, dtype=float)
    inside = np.abs(z) < 1.0
    if name == "cos2":
        out = np.cos(0.5 * np.pi * z) ** 2
    elif name == "cos4":
        out = (4.0 / 3.0) * np.cos(0.5 * np.pi * z) ** 4
    elif name == "shifted":
        s = (z - _SHIFT_CENTER) / _SHIFT_HALF
        inside = np.abs(s) < 1.0
        out = np.cos(0.5 * np.pi * s) ** 2 / _SHIFT_HALF
    else:
        raise InvalidParameter(f"unknown kernel shape {name!r}")
    return np.where(inside, out, 0.0)


@dataclass(frozen=True)
class ExchangeKernel:
    """Compactly supported exchange profile on (-1, 1).

    The profile is ``mass`` times a unit-mass built-in shape. Its scaled
    version concentrates on (-eps, eps) with the same total mass.
    """

    shape: str = "cos2"
    mass: float = 1.0

    def __post_init__(self):
        if self.shape not in KERNEL_SHAPES:
            raise InvalidParameter(
                f"kernel must be one of {', '.join(KERNEL_SHAPES)}, got {self.shape!r}"
            )
        if not math.isfinite(self.mass) or self.mass < 0:
            raise InvalidParameter("kernel mass must be >= 0")

    @property
    def support(self) -> tuple[float, float]:
        if self.shape == "shifted":
            return (_SHIFT_CENTER - _SHIFT_HALF, _SHIFT_CENTER + _SHIFT_HALF)
        return (-1.0, 1.0)

    @property
    def is_even(self) -> bool:
        return self.shape != "shifted"

    @property
    def integral(self) -> float:
        return self.mass

    def profile(self, z):
        """Unscaled profile nu(z)."""
        return self.mass * _shape(self.shape, z)

    def scaled(self, eps: float, y):
        return eval_kernel_scaled(self, eps, y)


def eval_kernel_scaled(kernel: ExchangeKernel, eps: float, y):
    """Evaluate nu_eps(y) = nu(y / eps) / eps."""
    if not eps > 0:
        raise InvalidParameter("eps must be > 0")
    out = kernel.profile(np.asarray(y, dtype=float) / eps) / eps
    return float(out) if np.ndim(out) == 0 else out


def kernel_mass(kernel: ExchangeKernel, eps: float) -> float:
    """Adaptive quadrature of the scaled kernel over its support."""
    if not eps > 0:
        raise InvalidParameter("eps must be > 0")
    if kernel.mass == 0:
        return 0.0
    lo, hi = kernel.support
    value, _ = integrate.quad(
        lambda y: eval_kernel_scaled(kernel, eps, y), lo * eps, hi * eps,
        epsabs=0.0, epsrel=1e-13, limit=200,
    )
    return value


@dataclass(frozen=True)
class ExchangeKernels:
    """The pair (nu, mu): field-to-road and road-to-field exchange."""

    nu: ExchangeKernel
    mu: ExchangeKernel

    @classmethod
    def default(cls, params: ModelParams, independent: bool = False, shape: str = "cos2"):
        """Proportional kernels mu = mu_bar nu / nu_bar, or an independent pair.

        The independent pair uses a cos^4 profile for mu, which makes the
        stationary field profile non-constant.
        """
        nu = ExchangeKernel(shape, params.nu_bar)
        if independent:
            mu_shape = "cos4" if shape != "cos4" else "cos2"
            return cls(nu, ExchangeKernel(mu_shape, params.mu_bar))
        return cls(nu, ExchangeKernel(shape, params.mu_bar))

    @property
    def proportional(self) -> bool:
        return self.nu.shape == self.mu.shape

    @property
    def is_even(self) -> bool:
        return self.nu.is_even and self.mu.is_even

    def check(self, params: ModelParams) -> None:
        if not math.isclose(self.nu.mass, params.nu_bar, rel_tol=1e-12):
            raise InvalidParameter("nu kernel mass must equal nu_bar")
        if not math.isclose(self.mu.mass, params.mu_bar, rel_tol=1e-12):
            raise InvalidParameter("mu kernel mass must equal mu_bar")


@dataclass(frozen=True)
class Reaction:
    """Logistic KPP reaction r s (1 - s), continued linearly outside ``clamp``."""

    f_prime0: float = 1.0
    kind: str = "logistic"
    clamp: tuple[float, float] = field(default=(-1.0, 3.0))

    def __post_init__(self):
        if self.kind != "logistic":
            raise InvalidParameter(f"unknown reaction kind {self.kind!r}")
        if not self.f_prime0 > 0:
            raise InvalidParameter("f_prime0 must be > 0")
        lo, hi = self.clamp
        if not (lo <= 0.0 and hi >= 1.0):
            raise InvalidParameter("clamp interval must contain [0, 1]")

    def _core(self, s):
        return self.f_prime0 * s * (1.0 - s)

    def _core_prime(self, s):
        return self.f_prime0 * (1.0 - 2.0 * s)

    @property
    def far_slope(self) -> float:
        """Slope of the linear continuation beyond the upper clamp."""
        return float(self._core_prime(self.clamp[1]))

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        lo, hi = self.clamp
        out = self._core(np.clip(s, lo, hi))
        out = out + np.where(s > hi, self._core_prime(hi) * (s - hi), 0.0)
        out = out + np.where(s < lo, self._core_prime(lo) * (s - lo), 0.0)
        return float(out) if out.ndim == 0 else out

    def derivative(self, s):
        s = np.asarray(s, dtype=float)
        lo, hi = self.clamp
        out = self._core_prime(np.clip(s, lo, hi))
        return float(out) if out.ndim == 0 else out

    def antiderivative(self, t):
        """F(t) = integral of f from 1 to t."""
        t = np.asarray(t, dtype=float)
        lo, hi = self.clamp
        r = self.f_prime0

        def core(x):
            return r * (x**2 / 2.0 - x**3 / 3.0 - 1.0 / 6.0)

        tc = np.clip(t, lo, hi)
        out = core(tc)
        up = t - hi
        out = out + np.where(t > hi, self._core(hi) * up + 0.5 * self._core_prime(hi) * up**2, 0.0)
        dn = t - lo
        out = out + np.where(t < lo, self._core(lo) * dn + 0.5 * self._core_prime(lo) * dn**2, 0.0)
        return float(out) if out.ndim == 0 else out

    def check_kpp(self, samples: int = 1000) -> None:
        """Sample the KPP conditions f(0)=f(1)=0, 0 < f(s) <= f'(0) s."""
        s = np.linspace(0.0, 1.0, samples + 2)[1:-1]
        fs = self(s)
        if abs(self(0.0)) > 0 or abs(self(1.0)) > 0:
            raise InvalidParameter("reaction must vanish at 0 and 1")
        if np.any(fs > self.f_prime0 * s * (1 + 1e-14)):
            raise InvalidParameter("reaction exceeds its linearisation on (0, 1)")
        if np.any(fs <= 0):
            raise InvalidParameter("reaction must be positive on (0, 1)")

    def check_coercivity(self, nu_bar: float, d: float) -> None:
        """Growth at infinity must satisfy lim f(s)/s < -2 nu_bar^2 / d."""
        if not self.far_slope < -2.0 * nu_bar**2 / d:
            raise InvalidParameter(
                f"reaction continuation slope {self.far_slope:g} is not below "
                f"-2 nu_bar^2/d = {-2.0 * nu_bar**2 / d:g}; widen the clamp"
            )
