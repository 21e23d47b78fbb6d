"""Time integration of the road-field systems on a truncated rectangle.

Both the nonlocal eps-system and its local limit are advanced with a Lie
splitting:

A. implicit x-diffusion of every field row and of the road,
B. per x-column implicit solve of y-diffusion coupled to the road
   (nonlocal exchange integrals, or the flux-jump condition at y = 0),
   a tridiagonal system bordered by the road unknown,
C. explicit reaction.

Walls carry homogeneous Neumann conditions. The y-grid may be refined
around the road so the exchange kernel is resolved without a globally
fine mesh.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .errors import InvalidParameter, NumericalFailure
from .linalg import ArrowheadSolver, TridiagonalFactor
from .model import ExchangeKernels, ModelParams

log = logging.getLogger(__name__)

WALL_MARGIN = 5  # in units of dx


class WallReached(NumericalFailure):
    """The road front came within the guard distance of a wall."""


def _symmetric_nodes(half, h):
    n = int(round(half / h))
    if n < 2 or not math.isclose(n * h, half, rel_tol=1e-9, abs_tol=1e-12):
        raise InvalidParameter(f"half-width {half} must be a multiple of the spacing {h}")
    return h * np.arange(-n, n + 1)


@dataclass(frozen=True)
class SimGrid:
    """Rectangle [-Lx, Lx] x [-Ly, Ly].

    x is uniform with spacing dx. y is uniform with spacing dy on
    [-y_core, y_core] (the whole strip when ``y_core`` is None) and
    geometrically stretched beyond it, with spacing capped at ``dy_far``.
    y = 0 is always a node.
    """

    Lx: float
    Ly: float
    dx: float
    dy: float
    y_core: float | None = None
    dy_far: float | None = None
    ratio: float = 1.05

    def __post_init__(self):
        for name in ("Lx", "Ly", "dx", "dy"):
            if not getattr(self, name) > 0:
                raise InvalidParameter(f"{name} must be > 0")
        if self.y_core is not None and not (self.dy <= self.y_core <= self.Ly):
            raise InvalidParameter("y_core must lie in [dy, Ly]")

    @classmethod
    def resolving(cls, Lx, Ly, dx, eps, dy_far=None, per_eps=8):
        """Grid whose uniform core [-2 eps, 2 eps] has spacing eps / per_eps."""
        return cls(Lx, Ly, dx, eps / per_eps, y_core=2.0 * eps, dy_far=dy_far or dx)

    @property
    def x(self) -> np.ndarray:
        return _symmetric_nodes(self.Lx, self.dx)

    @property
    def y(self) -> np.ndarray:
        if self.y_core is None:
            return _symmetric_nodes(self.Ly, self.dy)
        core = _symmetric_nodes(self.y_core, self.dy)
        far = self.dy_far or self.dy
        out = []
        y, h = core[-1], self.dy
        while y < self.Ly - 1e-12:
            h = min(h * self.ratio, far)
            y = min(y + h, self.Ly)
            if self.Ly - y < 0.5 * h:
                y = self.Ly
            out.append(y)
        right = np.array(out)
        return np.concatenate([-right[::-1], core, right])

    @property
    def Nx(self) -> int:
        return len(self.x)

    @property
    def Ny(self) -> int:
        return len(self.y)

    @property
    def dy_min(self) -> float:
        return float(np.min(np.diff(self.y)))

    def check_model(self, model: "ModelSpec") -> None:
        y = self.y
        if model.kind == "nonlocal":
            inside = int(np.sum(np.abs(y) <= model.eps * (1 + 1e-9)))
            if inside < 17:
                raise InvalidParameter(
                    f"grid puts {inside} nodes in [-eps, eps]; at least 17 are required"
                )
        else:
            j0 = len(y) // 2
            h = np.diff(y[j0 - 2:j0 + 3])
            if not np.allclose(h, h[0], rtol=1e-9):
                raise InvalidParameter("local model needs uniform spacing on the 5 nodes around y = 0")


def cell_widths(nodes):
    w = np.empty_like(nodes)
    w[1:-1] = 0.5 * (nodes[2:] - nodes[:-2])
    w[0] = 0.5 * (nodes[1] - nodes[0])
    w[-1] = 0.5 * (nodes[-1] - nodes[-2])
    return w


@dataclass(frozen=True)
class ModelSpec:
    """``kind`` is ``"nonlocal"`` (with eps > 0) or ``"local"``."""

    kind: str = "local"
    eps: float = 0.0

    def __post_init__(self):
        if self.kind not in ("nonlocal", "local"):
            raise InvalidParameter(f"unknown model {self.kind!r}")
        if self.kind == "nonlocal" and not self.eps > 0:
            raise InvalidParameter("eps must be > 0 for the nonlocal model")

    @classmethod
    def local(cls):
        return cls("local")

    @classmethod
    def nonlocal_(cls, eps):
        return cls("nonlocal", float(eps))

    def label(self) -> str:
        return "local" if self.kind == "local" else f"nonlocal(eps={self.eps:g})"


@dataclass
class FieldState:
    t: float
    u: np.ndarray
    v: np.ndarray
    model: ModelSpec

    def copy(self) -> "FieldState":
        return FieldState(self.t, self.u.copy(), self.v.copy(), self.model)


@dataclass(frozen=True)
class InitialDatum:
    """Compactly supported cos^2 bump of the given radius.

    ``shape``: ``"bump"`` (road and field), ``"road"`` (road only) or
    ``"field"`` (field only).
    """

    shape: str = "bump"
    amp_u: float = 0.5
    amp_v: float = 0.5
    radius: float = 5.0

    def __post_init__(self):
        if self.shape not in ("bump", "road", "field"):
            raise InvalidParameter(f"unknown datum shape {self.shape!r}")
        if self.amp_u < 0 or self.amp_v < 0:
            raise InvalidParameter("datum amplitudes must be >= 0")
        if not self.radius > 0:
            raise InvalidParameter("datum radius must be > 0")
        au = self.amp_u if self.shape != "field" else 0.0
        av = self.amp_v if self.shape != "road" else 0.0
        if au == 0 and av == 0:
            raise InvalidParameter("datum must not vanish identically")

    def check_small(self, m: float, mu_bar: float) -> None:
        """Smallness (u0, v0) <= (m / mu_bar, m) needed for uniform spreading."""
        if self.amp_u > m / mu_bar or self.amp_v > m:
            raise InvalidParameter(
                f"datum amplitudes ({self.amp_u}, {self.amp_v}) exceed ({m / mu_bar}, {m})"
            )

    def state(self, grid: SimGrid, model: ModelSpec) -> FieldState:
        x, y = grid.x, grid.y
        R = self.radius

        def bump(r):
            return np.where(r < R, np.cos(0.5 * np.pi * r / R) ** 2, 0.0)

        u = (self.amp_u if self.shape != "field" else 0.0) * bump(np.abs(x))
        rr = np.hypot(x[:, None], y[None, :])
        v = (self.amp_v if self.shape != "road" else 0.0) * bump(rr)
        return FieldState(0.0, u, v, model)


def discrete_kernels(params, kernels, eps, y):
    """Kernel samples rescaled so their quadrature masses are exact.

    Exact discrete masses make the exchange terms conserve total mass and
    keep the proportional-kernel steady state exactly stationary.
    """
    w = cell_widths(y)
    nu = kernels.nu.scaled(eps, y)
    mu = kernels.mu.scaled(eps, y)
    nm, mm = float(w @ nu), float(w @ mu)
    if nm <= 0 or mm <= 0:
        raise InvalidParameter("exchange kernels are not resolved by the y-grid")
    return nu * (params.nu_bar / nm), mu * (params.mu_bar / mm)


def _neumann_laplacian_rows(nodes, coef):
    """Finite-volume Neumann operator: returns (lower, diag, upper, widths)."""
    h = np.diff(nodes)
    k = coef / h
    diag = np.zeros(len(nodes))
    diag[:-1] += k
    diag[1:] += k
    return -k, diag, -k, cell_widths(nodes)


class Stepper:
    """One Lie-split step for fixed (model, grid, dt).

    ``theta`` selects the x-diffusion scheme: 1 is backward Euler, 0.5 is
    Crank-Nicolson. ``reaction`` replaces the model's logistic term
    (e.g. ``lambda v: 0 * v`` for pure exchange and diffusion).
    """

    def __init__(self, params: ModelParams, kernels: ExchangeKernels, model: ModelSpec,
                 grid: SimGrid, dt: float, theta: float = 1.0, reaction=None):
        if not dt > 0:
            raise InvalidParameter("dt must be > 0")
        if not 0.5 <= theta <= 1.0:
            raise InvalidParameter("theta must lie in [0.5, 1]")
        grid.check_model(model)
        self.params = params
        self.reaction = params.reaction() if reaction is None else reaction
        self.model = model
        self.grid = grid
        self.dt = dt
        self.theta = theta
        self.x = grid.x
        self.y = grid.y
        self._build_x()
        self._build_column(kernels)

    def _build_x(self):
        dt, th = self.dt, self.theta
        lo, di, up, w = _neumann_laplacian_rows(self.x, 1.0)
        self._xop = (lo / w[1:], di / w, up / w[:-1])
        self._fx = {}
        for name, coef in (("u", self.params.D), ("v", self.params.d)):
            self._fx[name] = TridiagonalFactor(
                th * dt * coef * self._xop[0], 1.0 + th * dt * coef * self._xop[1],
                th * dt * coef * self._xop[2],
            )

    def _apply_x(self, arr, coef):
        lo, di, up = self._xop
        out = di.reshape(-1, *([1] * (arr.ndim - 1))) * arr
        out[1:] += lo.reshape(-1, *([1] * (arr.ndim - 1))) * arr[:-1]
        out[:-1] += up.reshape(-1, *([1] * (arr.ndim - 1))) * arr[1:]
        return coef * out

    def _build_column(self, kernels):
        p, dt, y = self.params, self.dt, self.y
        lo, di, up, w = _neumann_laplacian_rows(y, p.d)
        self.wy = w
        diag = di + w / dt
        n = len(y)
        col = np.zeros(n)
        row = np.zeros(n)
        self._j0 = j0 = n // 2
        if self.model.kind == "nonlocal":
            nu, mu = discrete_kernels(p, kernels, self.model.eps, y)
            diag = diag + w * nu
            col = -w * mu
            row = -w * nu
            self.nu_h, self.mu_h = nu, mu
        else:
            h = y[j0 + 1] - y[j0]
            if dt < h * h / (2.0 * p.d):
                log.warning("dt below dy^2/(2d): the interface row loses monotonicity")
            side = p.d / h - h / (2.0 * dt)
            diag[j0] = 2.0 * p.d / h + p.nu_bar
            lo = lo.copy()
            up = up.copy()
            lo[j0 - 1] = -side
            up[j0] = -side
            col[j0] = -p.mu_bar
            row[j0] = -p.nu_bar
            self._interface = h / (2.0 * dt)
        self._column = ArrowheadSolver(lo, diag, up, col, row, 1.0 / dt + p.mu_bar)

    def step(self, state: FieldState) -> FieldState:
        dt, th = self.dt, self.theta
        u, v = state.u, state.v
        # A: x-diffusion
        if th < 1.0:
            u = u + (1 - th) * dt * -self._apply_x(u, self.params.D)
            v = v + (1 - th) * dt * -self._apply_x(v, self.params.d)
        u = self._fx["u"].solve(u)
        v = self._fx["v"].solve(v)
        # B: y-diffusion and exchange, one bordered solve per column
        rhs = (self.wy[:, None] / dt) * v.T
        if self.model.kind == "local":
            j0 = self._j0
            rhs[j0] = self._interface * (v[:, j0 - 1] + v[:, j0 + 1])
        vt, u = self._column.solve(rhs, u / dt)
        v = vt.T
        # C: reaction
        v = v + dt * self.reaction(v)
        if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
            raise NumericalFailure(
                "non-finite values in time step",
                {"t": state.t, "dt": dt, "bad_u": int(np.sum(~np.isfinite(u))),
                 "bad_v": int(np.sum(~np.isfinite(v)))},
            )
        return FieldState(state.t + dt, np.ascontiguousarray(u), np.ascontiguousarray(v), state.model)


def step(state: FieldState, params: ModelParams, kernels: ExchangeKernels, grid: SimGrid,
         dt: float, theta: float = 1.0) -> FieldState:
    """Advance one step (builds the factorisations; use Stepper in loops)."""
    return Stepper(params, kernels, state.model, grid, dt, theta).step(state)


def total_mass(state: FieldState, grid: SimGrid) -> float:
    """Trapezoid mass of u over x plus v over the rectangle."""
    wx = cell_widths(grid.x)
    wy = cell_widths(grid.y)
    return float(wx @ state.u + wx @ state.v @ wy)


def front_position(u, x, theta):
    """Largest x with u >= theta, linearly interpolated; x[0] if none."""
    idx = np.nonzero(u >= theta)[0]
    if len(idx) == 0:
        return float(x[0])
    i = idx[-1]
    if i == len(x) - 1:
        return float(x[-1])
    frac = (u[i] - theta) / (u[i] - u[i + 1])
    return float(x[i] + frac * (x[i + 1] - x[i]))


@dataclass
class RunResult:
    state: FieldState
    samples: dict = field(default_factory=dict)
    times: list = field(default_factory=list)
    steps: int = 0
    stopped_at_wall: bool = False
    guard_margin: float = math.inf


def run(
    params: ModelParams,
    kernels: ExchangeKernels,
    model: ModelSpec,
    datum: InitialDatum | FieldState,
    grid: SimGrid,
    T: float,
    dt: float | None = None,
    observers: dict[str, Callable[[FieldState], object]] | None = None,
    sample_every: float | None = None,
    wall_guard: str = "raise",
    theta: float = 1.0,
    reaction=None,
) -> RunResult:
    """Integrate to time T with fixed dt, the last step shortened to land on T.

    Observers are called at t = 0, every ``sample_every`` time units and at
    the final time. ``wall_guard`` is ``"raise"``, ``"stop"`` or ``"off"``;
    the guard watches the road front at level 0.1 nu_bar / mu_bar.
    """
    if T < 0:
        raise InvalidParameter("T must be >= 0")
    if wall_guard not in ("raise", "stop", "off"):
        raise InvalidParameter("wall_guard must be raise, stop or off")
    state = datum.state(grid, model) if isinstance(datum, InitialDatum) else datum.copy()
    dt = 0.25 * min(grid.dx, grid.dy_min) if dt is None else dt
    observers = observers or {}
    result = RunResult(state=state, samples={k: [] for k in observers})

    def observe(s):
        result.times.append(s.t)
        for name, fn in observers.items():
            result.samples[name].append(fn(s))

    observe(state)
    if T == 0:
        return result
    n_full = int(math.floor(T / dt + 1e-9))
    last = T - n_full * dt
    if last < 1e-12 * T:
        last = 0.0
    stepper = Stepper(params, kernels, model, grid, dt, theta, reaction)
    x = grid.x
    theta_front = 0.1 * params.steady_road
    guard = WALL_MARGIN * grid.dx
    next_sample = sample_every if sample_every else math.inf
    total = n_full + (1 if last > 0 else 0)
    for k in range(total):
        if k == n_full:
            stepper = Stepper(params, kernels, model, grid, last, theta, reaction)
        state = stepper.step(state)
        result.steps += 1
        if wall_guard != "off":
            right = front_position(state.u, x, theta_front)
            left = -front_position(state.u[::-1], -x[::-1], theta_front)
            margin = min(grid.Lx - right, left + grid.Lx) if np.any(state.u >= theta_front) else math.inf
            result.guard_margin = min(result.guard_margin, margin)
            if margin < guard:
                if wall_guard == "raise":
                    raise WallReached(
                        "road front reached the wall guard",
                        {"t": state.t, "front": right, "margin": margin},
                    )
                result.stopped_at_wall = True
                observe(state)
                break
        if state.t >= next_sample - 1e-9 * dt:
            observe(state)
            next_sample += sample_every
    else:
        if not result.times or result.times[-1] != state.t:
            observe(state)
    result.state = state
    return result


def sup_difference(a: FieldState, b: FieldState):
    """Max-norm differences (|u_a - u_b|, |v_a - v_b|) over all nodes."""
    if a.u.shape != b.u.shape or a.v.shape != b.v.shape:
        raise InvalidParameter("states live on different grids")
    if not math.isclose(a.t, b.t, rel_tol=1e-9, abs_tol=1e-12):
        raise InvalidParameter(f"states are at different times {a.t} and {b.t}")
    return float(np.max(np.abs(a.u - b.u))), float(np.max(np.abs(a.v - b.v)))
