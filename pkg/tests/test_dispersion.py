import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, optimize

from roadkpp import DomainError, ExchangeKernel, ExchangeKernels, Mode, ModelParams, Truncation, envelope_speed, find_speed
from roadkpp.dispersion import (
    P_of, SpectralPoint, kato_bound, lambda2_bounds, local_phi, psi1, psi2_curve, psi2_local,
    psi2_nonlocal, solve_helmholtz_complex, solve_phi_bvp,
)


def test_psi1_values():
    assert psi1(ModelParams(D=1), 2.0, 1.0) == pytest.approx(2.0)
    assert psi1(ModelParams(mu_bar=3.0), 2.0, 0.0) == 3.0
    assert psi1(ModelParams(D=10), 4.0, 0.4) == pytest.approx(1.0)


def test_lambda2_bounds():
    p = ModelParams()
    assert lambda2_bounds(p, 2.0) == pytest.approx((1.0, 1.0))
    lo, hi = lambda2_bounds(p, 2.5)
    assert (lo, hi) == pytest.approx((0.5, 2.0))
    assert abs(P_of(p, 2.5, lo)) < 1e-12 and abs(P_of(p, 2.5, hi)) < 1e-12
    with pytest.raises(DomainError):
        lambda2_bounds(p, 1.9)


def test_psi2_local_values():
    assert psi2_local(ModelParams(mu_bar=1.7), 2.5, 0.5) == pytest.approx(1.7)
    # P = 1 at c = 3, lambda = 1 when d = f'(0) = 1
    assert psi2_local(ModelParams(), 3.0, 1.0) == pytest.approx(1.0 / 3.0)
    p = ModelParams(d=4.0, mu_bar=2.0, f_prime0=1.0)
    lam = 0.5
    c = (1.0 + p.d * lam**2 + p.f_prime0) / lam  # P = 1
    assert psi2_local(p, c, lam) == pytest.approx(2.0 / 5.0)
    with pytest.raises(DomainError):
        psi2_local(ModelParams(), 2.5, 0.3)


def test_psi2_local_truncated_matches_scipy_bvp():
    # [DERIVED] half-line problem solved by collocation on (0, L)
    p = ModelParams(d=1.3, mu_bar=0.7, nu_bar=1.4)
    c, lam, L, delta = 2.6, 0.9, 2.0, 0.1
    q = P_of(p, c, lam) + delta

    def rhs(y, u):
        return np.vstack([u[1], q * u[0] / p.d])

    def bc(a, b):
        # symmetric jump: -2 d phi'(0+) = mu_bar - nu_bar phi(0)
        return np.array([-2 * p.d * a[1] - p.mu_bar + p.nu_bar * a[0], b[0]])

    y = np.linspace(0, L, 50)
    sol = integrate.solve_bvp(rhs, bc, y, np.zeros((2, y.size)), tol=1e-10)
    assert sol.success
    ref = p.nu_bar * sol.sol(0.0)[0]
    assert psi2_local(p, c, lam, Truncation(L, delta)) == pytest.approx(ref, rel=1e-7)


def _bvp_oracle(p, kernels, eps, c, lam):
    """Collocation solve of the exchange ODE in the physical variable y."""
    q = P_of(p, c, lam)
    kappa = math.sqrt(q / p.d)
    Y = eps + 2.0

    def rhs(y, u):
        nu = kernels.nu.scaled(eps, y)
        mu = kernels.mu.scaled(eps, y)
        return np.vstack([u[1], ((q + nu) * u[0] - mu) / p.d])

    def bc(a, b):
        return np.array([a[1] - kappa * a[0], b[1] + kappa * b[0]])

    y = np.concatenate([np.linspace(-Y, -eps, 40), np.linspace(-eps, eps, 401)[1:-1], np.linspace(eps, Y, 40)])
    sol = integrate.solve_bvp(rhs, bc, y, np.zeros((2, y.size)), tol=1e-9, max_nodes=200000)
    assert sol.success
    z = np.linspace(-eps, eps, 20001)
    return sol, np.trapezoid(kernels.nu.scaled(eps, z) * sol.sol(z)[0], z)


@pytest.mark.parametrize("independent", [False, True])
def test_phi_bvp_matches_collocation_oracle(independent):
    p = ModelParams(d=1.0, mu_bar=1.2, nu_bar=0.8)
    kernels = ExchangeKernels.default(p, independent=independent)
    eps, c, lam = 0.2, 2.6, 0.8
    sol, psi2_ref = _bvp_oracle(p, kernels, eps, c, lam)
    point = SpectralPoint.at(p, c, lam)
    phi = solve_phi_bvp(p, kernels, eps, point)
    for y in (0.0, 0.05, -0.13, 0.3, -0.7):
        assert phi(y) == pytest.approx(sol.sol(y)[0], rel=2e-6)
    assert psi2_nonlocal(p, kernels, eps, point) == pytest.approx(psi2_ref, rel=2e-6)


def test_phi_properties(params, kernels):
    point = SpectralPoint.at(params, 2.5, 1.0)
    phi = solve_phi_bvp(params, kernels, 0.1, point)
    assert phi.values.min() > 0
    assert np.max(np.abs(phi.values - phi.values[::-1])) <= 1e-10
    ratio = phi(0.2) / phi(0.1)
    assert ratio == pytest.approx(math.exp(-math.sqrt(point.P / params.d) * 0.1), abs=1e-6)
    assert phi.K == pytest.approx(phi.values[-1] * math.exp(phi.kappa * 0.1))


def test_asymmetric_kernel_has_two_tails(params):
    kernels = ExchangeKernels(ExchangeKernel("shifted", params.nu_bar), ExchangeKernel("shifted", params.mu_bar))
    phi = solve_phi_bvp(params, kernels, 0.2, SpectralPoint.at(params, 2.5, 1.0))
    assert phi.asymmetric
    assert phi.K_plus > phi.K_minus


def test_phi_anchor_converges_linearly():
    p = ModelParams()
    kernels = ExchangeKernels.default(p)
    point = SpectralPoint.at(p, 3.0, 1.0)  # P = 1
    anchor = p.mu_bar / (1.0 + 2.0 * math.sqrt(p.d * point.P))
    errs = [abs(solve_phi_bvp(p, kernels, e, point).at_zero - anchor) for e in (0.08, 0.04, 0.02, 0.01)]
    orders = [math.log2(a / b) for a, b in zip(errs, errs[1:])]
    assert min(orders) >= 0.9
    assert errs[-1] <= 0.05


def test_bvp_grid_convergence_second_order(params, kernels):
    point = SpectralPoint.at(params, 2.5, 1.0)
    vals = [solve_phi_bvp(params, kernels, 0.1, point, nodes=n).at_zero for n in (101, 201, 401, 801, 1601)]
    diffs = np.abs(np.diff(vals))
    orders = np.log2(diffs[:-1] / diffs[1:])
    assert orders.min() >= 1.9


def test_local_phi_profile(params):
    point = SpectralPoint.at(params, 3.0, 1.0)
    phi = local_phi(params, point)
    assert phi(0.0) == pytest.approx(1.0 / 3.0)
    assert phi(2.0) == pytest.approx(math.exp(-2.0) / 3.0)


def test_phi_uniformly_bounded_in_eps(params, kernels):
    # no blow-up as eps shrinks on a compact (c, lam) box
    sups, slopes = [], []
    for eps in (0.4, 0.2, 0.1, 0.05):
        for c in (2.2, 2.6, 3.0):
            lo, hi = lambda2_bounds(params, c)
            for lam in np.linspace(lo, hi, 5)[1:-1]:
                phi = solve_phi_bvp(params, kernels, eps, SpectralPoint.at(params, c, lam))
                sups.append(phi.values.max())
                y = eps * phi.grid
                slopes.append(np.max(np.abs(np.diff(phi.values) / np.diff(y))))
    assert max(sups) <= params.mu_bar
    assert max(slopes) <= 2.0 * params.mu_bar / params.d


def test_closed_form_speed_when_road_is_slow():
    for D in (0.5, 1.0, 2.0):
        p = ModelParams(D=D, d=1.0, mu_bar=2.0)
        for mode in (Mode.local(), Mode.nonlocal_(0.3)):
            res = find_speed(p, None, mode)
            assert res.c_star == pytest.approx(2.0, rel=1e-12)
            assert res.lambda_star == pytest.approx(1.0)


def _grid_scan_speed(p, nc=400, nl=400):
    """[DERIVED] first c on a grid where max_lambda(psi1 - psi2_0) >= 0, linearly refined."""
    c_bar = envelope_speed(p)[0]
    cs = np.linspace(p.c_kpp, c_bar, nc)
    h = []
    for c in cs:
        root = math.sqrt(max(c * c - p.c_kpp**2, 0.0))
        lams = np.linspace((c - root) / (2 * p.d), (c + root) / (2 * p.d), nl)
        P = np.maximum(lams * c - p.d * lams**2 - p.f_prime0, 0.0)
        g = -p.D * lams**2 + c * lams + p.mu_bar - p.nu_bar * p.mu_bar / (p.nu_bar + 2 * np.sqrt(p.d * P))
        h.append(g.max())
    h = np.array(h)
    i = int(np.argmax(h >= 0))
    return cs[i - 1] - h[i - 1] * (cs[i] - cs[i - 1]) / (h[i] - h[i - 1])


def test_local_speed_matches_grid_scan(params):
    res = find_speed(params, None, Mode.local())
    assert res.c_star == pytest.approx(_grid_scan_speed(params), abs=1e-3)
    c_bar, lam_bar = envelope_speed(params)
    assert params.c_kpp < res.c_star < c_bar
    assert res.lambda_star > lam_bar
    gap = psi1(params, res.c_star, res.lambda_star) - psi2_local(params, res.c_star, res.lambda_star)
    assert abs(gap) <= 1e-8 * params.mu_bar


def test_nonlocal_tangency_residual(params, kernels):
    res = find_speed(params, kernels, Mode.nonlocal_(0.2))
    gap = psi1(params, res.c_star, res.lambda_star) - psi2_nonlocal(
        params, kernels, 0.2, SpectralPoint.at(params, res.c_star, res.lambda_star))
    assert abs(gap) <= 1e-8 * params.mu_bar


def test_envelope_speed_matches_root_finder():
    for D, d, f0 in [(5, 1, 1), (3, 1, 2), (10, 2, 0.5)]:
        p = ModelParams(D=D, d=d, f_prime0=f0)

        def g(c):
            return (c - math.sqrt(c * c - p.c_kpp**2)) / (2 * d) - c / D

        ref = optimize.brentq(g, p.c_kpp * (1 + 1e-12), 100 * p.c_kpp, xtol=1e-14)
        c_bar, lam_bar = envelope_speed(p)
        assert c_bar == pytest.approx(ref, rel=1e-10)
        assert lam_bar == pytest.approx(c_bar / D)
        assert abs(g(c_bar)) < 1e-10
    assert envelope_speed(ModelParams())[0] == pytest.approx(2.5)
    with pytest.raises(DomainError):
        envelope_speed(ModelParams(D=2.0, d=1.0))


def test_truncated_speed_increases_to_full(params, kernels):
    full = find_speed(params, kernels, Mode.local()).c_star
    speeds = [find_speed(params, kernels, Mode.truncated(0.0, L, 0.0)).c_star for L in (1.0, 4.0, 16.0, 64.0)]
    assert all(s < full for s in speeds)
    assert all(b > a for a, b in zip(speeds, speeds[1:]))
    assert speeds[-1] == pytest.approx(full, abs=1e-3)
    pen = [find_speed(params, kernels, Mode.truncated(0.1, 8.0, dl)).c_star for dl in (0.2, 0.1, 0.05)]
    assert all(b > a for a, b in zip(pen, pen[1:]))


@given(eps=st.sampled_from([0.4, 0.2, 0.1]), c=st.floats(2.1, 3.5))
@settings(max_examples=10, deadline=None)
def test_psi2_curvature_is_one_signed(eps, c):
    # the closed-form limit nu mu / (nu + 2 sqrt(d P)) is convex in lambda
    p = ModelParams()
    kernels = ExchangeKernels.default(p)
    lo, hi = lambda2_bounds(p, c)
    lams = np.linspace(lo, hi, 23)[1:-1]
    vals = psi2_curve(p, kernels, Mode.nonlocal_(eps), c, lams)
    assert np.diff(vals, 2).min() > -1e-10
    assert np.diff(psi2_local(p, c, lams), 2).min() > 0


@given(eps=st.sampled_from([0.4, 0.1]), lam=st.floats(0.9, 1.1))
@settings(max_examples=10, deadline=None)
def test_psi2_decreasing_in_c(eps, lam):
    p = ModelParams()
    kernels = ExchangeKernels.default(p)
    cs = np.linspace(2.3, 3.5, 7)
    vals = [psi2_nonlocal(p, kernels, eps, SpectralPoint.at(p, c, lam)) for c in cs]
    assert all(b < a for a, b in zip(vals, vals[1:]))
    assert all(np.diff(psi1(p, cs, lam)) > 0)


def test_psi2_endpoint_value(params, kernels):
    lo, hi = lambda2_bounds(params, 2.5)
    for lam in (lo, hi):
        point = SpectralPoint.at(params, 2.5, lam)
        # at P = 0 the exterior is flat, so integrating the ODE gives int nu phi = int mu
        for k in (kernels, ExchangeKernels.default(params, independent=True)):
            for eps in (0.4, 0.1, 0.025):
                assert psi2_nonlocal(params, k, eps, point) == pytest.approx(params.mu_bar, abs=1e-9)


def test_helmholtz_real_case_positive():
    y = np.linspace(-3, 3, 301)
    phi = solve_helmholtz_complex(np.full(301, 4.0), np.exp(-y**2), 2.0, y)
    assert np.all(phi.real > 0) and np.max(np.abs(phi.imag)) == 0


def test_helmholtz_zero_rhs():
    y = np.linspace(-1, 1, 51)
    m = 2.0 + 1j * np.sin(y)
    assert np.max(np.abs(solve_helmholtz_complex(m, np.zeros(51), 1.0, y))) == 0


def test_helmholtz_precondition():
    y = np.linspace(-1, 1, 51)
    with pytest.raises(DomainError):
        solve_helmholtz_complex(np.full(51, 0.5), np.ones(51), 1.0, y)


def test_helmholtz_matches_dense_solve(rng):
    # [DERIVED] oracle: dense complex solve of the same discretisation
    n, kappa = 101, 1.5
    y = np.linspace(-2, 2, n)
    h = y[1] - y[0]
    m = kappa**2 + rng.uniform(0, 2, n) + 1j * rng.uniform(-3, 3, n)
    f = rng.normal(size=n) + 1j * rng.normal(size=n)
    A = np.zeros((n, n), dtype=complex)
    for i in range(n):
        A[i, i] = 2 / h**2 + m[i]
        if i > 0:
            A[i, i - 1] = -1 / h**2
        if i < n - 1:
            A[i, i + 1] = -1 / h**2
    A[0, 1] = A[-1, -2] = -2 / h**2
    A[0, 0] += 2 / h * np.sqrt(m[0])
    A[-1, -1] += 2 / h * np.sqrt(m[-1])
    np.testing.assert_allclose(solve_helmholtz_complex(m, f, kappa, y), np.linalg.solve(A, f), atol=1e-10)


@given(seed=st.integers(0, 2**31))
@settings(max_examples=25, deadline=None)
def test_kato_bound_holds(seed):
    rng = np.random.default_rng(seed)
    n, kappa = 201, rng.uniform(0.5, 2.0)
    y = np.linspace(-4, 4, n)
    m = kappa**2 + rng.uniform(0, 3, n) + 1j * rng.uniform(-5, 5, n)
    f = rng.normal(size=n) + 1j * rng.normal(size=n)
    phi = solve_helmholtz_complex(m, f, kappa, y)
    w = kato_bound(f, kappa, y)
    assert np.max(np.abs(phi) - w) <= 1e-10
    # continuous bound (1/2 kappa) int e^{-kappa |y - z|} |f(z)| dz, trapezoid
    h = y[1] - y[0]
    G = np.exp(-kappa * np.abs(y[:, None] - y[None, :])) / (2 * kappa)
    wts = np.full(n, h)
    wts[[0, -1]] = h / 2
    cont = G @ (wts * np.abs(f))
    assert np.max(np.abs(phi)) <= np.max(cont) * 1.05 + 1e-10
