"""Front tracking, speed fits, decay envelopes and the eps -> 0 experiments."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .dispersion import Mode, envelope_speed, find_speed
from .errors import InvalidParameter
from .model import ExchangeKernels, ModelParams
from .simulate import (
    FieldState, InitialDatum, ModelSpec, SimGrid, front_position, run, sup_difference,
)
from .stationary import StationaryNumerics, stationary_convergence_sweep

log = logging.getLogger(__name__)

ETA = 0.05
MIN_FIT_SAMPLES = 10


def default_threshold(params: ModelParams) -> float:
    return 0.1 * params.steady_road


def track_front(state: FieldState, grid: SimGrid, theta: float) -> float:
    """Largest x with u >= theta (interpolated); -Lx when u < theta everywhere."""
    return front_position(state.u, grid.x, theta)


@dataclass
class FrontTrace:
    times: np.ndarray
    positions: np.ndarray
    theta: float
    fitted_speed: float = math.nan
    fit_window: tuple[float, float] = (math.nan, math.nan)
    fit_residual: float = math.nan


def fit_speed(trace: FrontTrace, window_fraction: float = 0.5):
    """Least-squares slope over the trailing ``window_fraction`` of samples.

    Returns (speed, rms residual) and records both on the trace.
    """
    if not 0 < window_fraction <= 1:
        raise InvalidParameter("window_fraction must lie in (0, 1]")
    t = np.asarray(trace.times, dtype=float)
    X = np.asarray(trace.positions, dtype=float)
    n = int(math.ceil(window_fraction * len(t)))
    if n < MIN_FIT_SAMPLES:
        raise InvalidParameter(f"speed fit needs >= {MIN_FIT_SAMPLES} samples in the window, got {n}")
    t, X = t[-n:], X[-n:]
    A = np.column_stack([t, np.ones_like(t)])
    coef, *_ = np.linalg.lstsq(A, X, rcond=None)
    resid = float(np.sqrt(np.mean((A @ coef - X) ** 2)))
    trace.fitted_speed = float(coef[0])
    trace.fit_window = (float(t[0]), float(t[-1]))
    trace.fit_residual = resid
    return float(coef[0]), resid


def measure_speed(params, kernels, model: ModelSpec, grid: SimGrid, T: float = 120.0,
                  dt: float | None = None, datum: InitialDatum | None = None,
                  sample_every: float = 1.0, window_fraction: float = 0.5):
    """Simulate, trace the road front and fit its speed.

    The run stops at the wall guard, so a long horizon on a short domain
    uses the samples gathered before the front reaches the wall.
    """
    theta = default_threshold(params)
    x = grid.x
    result = run(
        params, kernels, model, datum or InitialDatum(), grid, T, dt,
        observers={"X": lambda s: front_position(s.u, x, theta)},
        sample_every=sample_every, wall_guard="stop",
    )
    trace = FrontTrace(np.array(result.times), np.array(result.samples["X"]), theta)
    fit_speed(trace, window_fraction)
    return trace, result


# --- decay envelope ---------------------------------------------------------

def envelope_rates(params: ModelParams):
    """(c_bar, lambda_bar) of the uniform exponential envelope."""
    return envelope_speed(params)


def calibrate_envelope(params: ModelParams, kernels: ExchangeKernels, model: ModelSpec,
                       datum: InitialDatum) -> float:
    """Amplitude K for which the datum lies under the critical travelling wave.

    The wave (1, phi*(y)) exp(-lambda*(|x| - c* t)) is a supersolution, so
    bounding the datum by K1 times it bounds the solution for all t;
    multiplying by max(1, sup phi*) covers the field component.
    """
    mode = Mode.local() if model.kind == "local" else Mode.nonlocal_(model.eps)
    res = find_speed(params, kernels, mode)
    lam = res.lambda_star
    R = datum.radius
    y = np.linspace(-R, R, 401)
    phi = np.asarray(res.phi_star(y), dtype=float)
    grow = math.exp(lam * R)
    K1 = max(datum.amp_u * grow, datum.amp_v * grow / float(phi.min()))
    sup_phi = float(np.max(res.phi_star(np.linspace(-5 * R, 5 * R, 2001))))
    return K1 * max(1.0, sup_phi)


def check_decay_envelope(state: FieldState, grid: SimGrid, params: ModelParams, K: float):
    """Check u, v <= K exp(-lambda_bar (|x| - c_bar t)) at every node.

    Returns (holds, worst signed margin); a positive margin is a violation.
    """
    c_bar, lam_bar = envelope_rates(params)
    env = K * np.exp(-lam_bar * (np.abs(grid.x) - c_bar * state.t))
    margin_u = float(np.max(state.u - env))
    margin_v = float(np.max(state.v.max(axis=1) - env))
    worst = max(margin_u, margin_v)
    return worst <= 0.0, worst


# --- experiments --------------------------------------------------------------

def strictly_decreasing(values) -> bool:
    v = list(values)
    return all(b < a for a, b in zip(v, v[1:]))


@dataclass
class Table:
    """Rows of dicts with fixed column order plus a verdict (None: not judged)."""

    name: str
    columns: list
    rows: list = field(default_factory=list)
    verdict: bool | None = None
    notes: dict = field(default_factory=dict)


def speed_convergence_experiment(params, kernels, eps_list, nodes=None):
    """c*_eps against c*_0 for each eps; verdict: gaps strictly decreasing."""
    kw = {} if nodes is None else {"nodes": nodes}
    c0 = find_speed(params, kernels, Mode.local()).c_star
    table = Table("speed", ["eps", "c_star", "gap"], notes={"c_star_0": c0})
    for eps in eps_list:
        c = find_speed(params, kernels, Mode.nonlocal_(eps), **kw).c_star
        table.rows.append({"eps": float(eps), "c_star": c, "gap": abs(c - c0)})
    if len(table.rows) > 1:
        gaps = [r["gap"] for r in table.rows]
        closed = not params.road_enhanced
        table.verdict = all(g == 0 for g in gaps) if closed else strictly_decreasing(gaps)
    return table


def stationary_experiment(params, kernels, eps_list, numerics: StationaryNumerics | None = None):
    """sup |V_eps - 1| per eps; verdict: strictly decreasing (or ~0 when exact)."""
    rows = stationary_convergence_sweep(params, kernels, eps_list, numerics)
    table = Table("stationary", ["eps", "U", "sup_dev", "residual", "iters"])
    for r in rows:
        table.rows.append({"eps": r.eps, "U": r.U, "sup_dev": r.sup_dev,
                           "residual": r.residual, "iters": r.iterations})
    ok = [r for r in rows if r.failed is None]
    if ok:
        table.notes["m"] = min(r.V_min for r in ok)
        table.notes["M"] = max(r.V_max for r in ok)
    if len(rows) > 1:
        devs = [r.sup_dev for r in rows]
        table.verdict = len(ok) == len(rows) and (
            max(devs) <= 1e-8 or strictly_decreasing(devs)
        )
    return table


def solution_convergence_experiment(params, kernels, eps_list, t_sample, grid: SimGrid,
                                    datum: InitialDatum | None = None, dt: float | None = None):
    """sup-norm gap between eps-runs and the local run at t_sample.

    The first row (eps = 0) compares the local run with a second local run
    as a control. Verdict: du + dv strictly decreasing in eps.
    """
    if t_sample < 0.1:
        raise InvalidParameter("t_sample must be >= 0.1")
    datum = datum or InitialDatum()
    eps_min = min(eps_list)
    if grid.dy > eps_min / 8 * (1 + 1e-12):
        raise InvalidParameter("grid must resolve the smallest eps (dy <= eps/8)")
    local = run(params, kernels, ModelSpec.local(), datum, grid, t_sample, dt).state
    control = run(params, kernels, ModelSpec.local(), datum, grid, t_sample, dt).state
    table = Table("solution", ["eps", "du", "dv", "total"])
    du, dv = sup_difference(local, control)
    table.rows.append({"eps": 0.0, "du": du, "dv": dv, "total": du + dv})
    for eps in eps_list:
        st = run(params, kernels, ModelSpec.nonlocal_(eps), datum, grid, t_sample, dt).state
        du, dv = sup_difference(st, local)
        table.rows.append({"eps": float(eps), "du": du, "dv": dv, "total": du + dv})
        log.info("eps=%g du=%.3e dv=%.3e", eps, du, dv)
    if len(eps_list) > 1:
        table.verdict = strictly_decreasing(r["total"] for r in table.rows[1:])
    return table


def uniform_spreading_experiment(params, kernels, eps_list, c_probe_list, datum: InitialDatum,
                                 T: float, grid: SimGrid, dt: float | None = None,
                                 m: float | None = None, eta: float = ETA):
    """Outer sup of u beyond c t (c > c*_0) and inner deviation inside (c < c*_0).

    ``m`` is the lower stationary level used for the smallness hypothesis;
    when omitted it is computed from a stationary sweep over ``eps_list``.
    """
    c0 = find_speed(params, kernels, Mode.local()).c_star
    for c in c_probe_list:
        if math.isclose(c, c0, rel_tol=1e-9):
            raise InvalidParameter("probe speed must differ from c*_0")
        if c <= 0:
            raise InvalidParameter("probe speeds must be > 0")
    if m is None:
        m = stationary_experiment(params, kernels, eps_list).notes["m"]
    datum.check_small(m, params.mu_bar)
    target = params.steady_road
    table = Table("spreading", ["eps", "c", "kind", "value", "below_eta"],
                  notes={"c_star_0": c0, "m": m, "T": T, "eta": eta})
    x = np.abs(grid.x)
    for eps in eps_list:
        model = ModelSpec.nonlocal_(eps) if eps > 0 else ModelSpec.local()
        res = run(params, kernels, model, datum, grid, T, dt, wall_guard="raise")
        u = res.state.u
        for c in c_probe_list:
            if c > c0:
                sel = x > c * T
                kind = "outer_sup"
                value = float(np.max(np.abs(u[sel]))) if np.any(sel) else math.nan
            else:
                sel = x < c * T
                kind = "inner_dev"
                value = float(np.max(np.abs(u[sel] - target))) if np.any(sel) else math.nan
            if not np.any(sel):
                log.warning("probe c=%g leaves no nodes in the domain at T=%g", c, T)
            table.rows.append({"eps": float(eps), "c": float(c), "kind": kind,
                               "value": value, "below_eta": bool(value < eta)})
    table.verdict = all(r["below_eta"] for r in table.rows)
    return table
