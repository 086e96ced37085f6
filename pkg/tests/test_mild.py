import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate

from fbmfluid.errors import ConfigurationError, DivergenceError, DomainError
from fbmfluid.fbm import TimeGrid
from fbmfluid.galerkin import GridWorkspace, PhysParams, SpectralField, measure_C1, modal_norm
from fbmfluid.hurst import HurstParam
from fbmfluid.mild import (FixedPointConfig, Trajectory, add_noise, check_step, convolve_forcing,
                           evolve_v, gronwall_bound, gronwall_constants, map_J1, map_J2,
                           measure_map_constants, phi_functions, picard_solve, pullback_solve,
                           shared_noise)
from fbmfluid.noise import ConvolutionSample, NoiseAssumption, convolve_field

N = 4
WS = GridWorkspace(N)
SP = WS.spectrum
P = PhysParams(0.5, 1.0, 0.5)
NOISE = NoiseAssumption("A4", SP)


def zero_noise(grid):
    return ConvolutionSample(grid, np.zeros((SP.K, grid.n_steps + 1)), HurstParam(0.75), 0, SP)


def field(seed, norm=1.0):
    return SpectralField.random(N, np.random.default_rng(seed), 1.5, norm)


@given(st.floats(1e-6, 50.0))
def test_phi_functions_match_definition(x):
    E1, E2 = phi_functions(np.array([x]))
    if x > 1e-3:
        assert E1[0] == pytest.approx(-math.expm1(-x) / x, rel=1e-12)
        assert E2[0] == pytest.approx((1 - math.exp(-x) * (1 + x)) / x ** 2, rel=1e-8)
    assert 0 < E2[0] <= E1[0] <= 1


def test_phi_functions_continuous_at_switch():
    lo, hi = phi_functions(np.array([1e-2 - 1e-12, 1e-2 + 1e-12]))
    assert abs(lo[0] - lo[1]) < 1e-11
    assert abs(hi[0] - hi[1]) < 1e-11


def test_convolve_forcing_exact_for_linear_data():
    lam = np.array([0.5, 7.0])
    dt, n = 0.1, 10
    t = dt * np.arange(n + 1)
    F = np.stack([1 + 2 * t, 3 - t], axis=1)
    out = convolve_forcing(F, lam, dt)
    for k in range(2):
        f = lambda s: math.exp(-lam[k] * (1.0 - s)) * np.interp(s, t, F[:, k])
        ref, _ = integrate.quad(f, 0, 1.0, points=list(t[1:-1]), epsabs=1e-14)
        assert out[-1, k] == pytest.approx(ref, rel=1e-12)


def test_J_maps_vanish_at_zero():
    g = TimeGrid(0.0, 0.01, 5)
    u = Trajectory(g, np.zeros((6, SP.K)), SP)
    assert np.all(map_J1(u, SP, WS).coeffs == 0)
    assert np.all(map_J2(u, P, SP, WS).coeffs == 0)


def test_J1_one_step_against_time_quadrature():
    g = TimeGrid(0.0, 0.02, 1)
    a = SpectralField(np.array([[0.3, 0.0, 0, 0], [0.5, 0.2, 0, 0], [0, 0, 0, 0], [0, 0, 0, 0]])).modal(SP)
    u = Trajectory(g, np.stack([a, a]), SP)
    B = WS.B_modal(a)
    J = map_J1(u, SP, WS).coeffs[-1]
    for k in np.nonzero(B)[0]:
        ref, _ = integrate.quad(lambda s: -math.exp(-SP.lam[k] * (0.02 - s)) * B[k], 0, 0.02, epsabs=1e-15)
        assert J[k] == pytest.approx(ref, abs=1e-8 * abs(B[k]) + 1e-15)


def test_J2_linear_limit_closed_form():
    p = PhysParams.linear_limit(0.8)
    g = TimeGrid(0.0, 0.01, 20)
    a = field(3).modal(SP)
    u = Trajectory(g, np.tile(a, (21, 1)), SP)
    J = map_J2(u, p, SP, WS).coeffs
    t = g.times[:, None]
    exact = -0.8 * SP.k2 * a * (1 - np.exp(-SP.lam * t)) / SP.lam
    assert np.max(np.abs(J - exact)) < 1e-8


def test_fixed_point_linear_case_one_iteration():
    g = TimeGrid(0.0, 0.01, 50)
    z = convolve_field(NOISE, 0.7, g, 3)
    u0 = field(1)
    tr = picard_solve(u0, z, FixedPointConfig(), P, SP, WS, terms=())
    assert tr.meta["windows"][0]["iterations"] == 1
    exact = np.exp(-np.outer(g.times, SP.lam)) * u0.modal(SP) + z.time_major()
    assert np.max(np.abs(tr.coeffs - exact)) < 1e-12


def test_fixed_point_zero_data():
    g = TimeGrid(0.0, 0.01, 20)
    tr = picard_solve(SpectralField.zeros(N), zero_noise(g), FixedPointConfig(), P, SP, WS)
    assert np.all(tr.coeffs == 0)


def test_picard_contracts_and_matches_euler():
    g = TimeGrid(0.0, 1e-3, 300)
    z = convolve_field(NOISE, 0.75, g, 5)
    u0 = field(2)
    tr = picard_solve(u0, z, FixedPointConfig(), P, SP, WS)
    assert tr.meta["max_contraction"] <= 0.55
    u = add_noise(evolve_v(u0, z, p=P, spectrum=SP, ws=WS), z)
    assert np.max(modal_norm(u.coeffs - tr.coeffs, SP, 0)) < 5e-3


def test_picard_divergence_is_reported():
    g = TimeGrid(0.0, 1e-3, 20)
    with pytest.raises(DivergenceError) as info:
        picard_solve(field(4, norm=1e5), zero_noise(g), FixedPointConfig(max_iter=30), P, SP, WS)
    assert info.value.history


def test_euler_linear_is_exact():
    g = TimeGrid(0.0, 0.01, 40)
    v0 = field(6)
    v = evolve_v(v0, zero_noise(g), p=P, spectrum=SP, ws=WS, terms=())
    exact = np.exp(-np.outer(g.times, SP.lam)) * v0.modal(SP)
    assert np.max(np.abs(v.coeffs - exact)) < 1e-14


def test_euler_convergence_order():
    T = 0.2
    u0 = field(8)
    finals = []
    for n in (100, 200, 400, 800):
        g = TimeGrid(0.0, T / n, n)
        finals.append(evolve_v(u0, zero_noise(g), p=P, spectrum=SP, ws=WS).coeffs[-1])
    e = [np.linalg.norm(finals[i] - finals[i + 1]) for i in range(3)]
    order = math.log2(e[1] / e[2])
    assert order >= 0.9


def test_stiffness_guard():
    with pytest.raises(ConfigurationError):
        check_step(SP, 0.1)
    check_step(SP, 0.005)


def test_map_constants_and_window():
    g = TimeGrid(0.0, 1e-3, 100)
    c = measure_map_constants(WS, P, g, np.random.default_rng(0), n_samples=5)
    assert all(np.isfinite(c[k]) and c[k] > 0 for k in ("c1", "c3", "c4"))
    T0 = min(1.0, 1 / (16 * c["c4"]))
    assert math.sqrt(c["c4"] * T0) <= 0.25


def test_gronwall_bound_holds():
    C1 = measure_C1(WS, np.random.default_rng(1), n_starts=2, n_iter=6, n_random=40).value
    C2, r1 = gronwall_constants(C1, SP.lambda1)
    assert C1 * C2 + r1 < math.sqrt(SP.lambda1) / 2
    g = TimeGrid(0.0, 2e-3, 500)
    for r in range(3):
        z = convolve_field(NOISE, 0.75, g, 11, replica=r)
        u0 = field(20 + r, norm=2.0)
        v = evolve_v(u0, z, p=P, spectrum=SP, ws=WS)
        bound, _ = gronwall_bound(modal_norm(u0.modal(SP), SP, 0) ** 2, z, SP, C1, C2, r1, P)
        assert np.all(v.norms[:, 0] ** 2 <= bound * (1 + 1e-12))


def test_pullback_cocycle_on_shared_noise():
    Z = shared_noise(NOISE, 0.6, 0.005, 4, horizon=3)
    again = shared_noise(NOISE, 0.6, 0.005, 4, horizon=3)
    assert np.array_equal(Z.z_coeffs, again.z_coeffs)
    u0 = field(1)
    whole = pullback_solve(u0, -2.0, Z=Z, p=P, spectrum=SP, ws=WS)
    first = pullback_solve(u0, -2.0, Z=Z, p=P, spectrum=SP, ws=WS, t_end=-1.0)
    mid = SpectralField.from_modal(first.coeffs[-1], SP)
    second = pullback_solve(mid, -1.0, Z=Z, p=P, spectrum=SP, ws=WS)
    assert np.allclose(second.coeffs[-1], whole.coeffs[-1], rtol=0, atol=1e-12)
    assert whole.grid.n_steps == 400 and second.grid.n_steps == 200


def test_pullback_short_interval_returns_initial_state():
    Z = shared_noise(NOISE, 0.6, 0.005, 4, horizon=2)
    u0 = field(3)
    a0 = u0.modal(SP)
    dist = []
    for t0 in (-0.04, -0.02, -0.01, -0.005):
        u = pullback_solve(u0, t0, Z=Z, p=P, spectrum=SP, ws=WS)
        assert np.allclose(u.coeffs[0], a0, rtol=0, atol=1e-14)
        dist.append(modal_norm(u.coeffs[-1] - a0, SP, 0))
    assert np.all(np.diff(dist) < 0)
    with pytest.raises(DomainError):
        pullback_solve(u0, 0.0, Z=Z, p=P, spectrum=SP, ws=WS)


def test_pullback_linear_closed_form():
    Z = shared_noise(NOISE, 0.6, 0.005, 4, horizon=2)
    u0 = field(3)
    t0 = -1.5
    u = pullback_solve(u0, t0, Z=Z, p=P, spectrum=SP, ws=WS, terms=())
    i0 = Z.grid.index_of(t0)
    v0 = u0.modal(SP) - Z.z_coeffs[:, i0]
    assert np.allclose(u.meta["v_final"], np.exp(SP.lam * t0) * v0, rtol=1e-12, atol=1e-300)
