import math

import numpy as np
import pytest

from fbmfluid.attractor import (attraction_test, condition_check, ergodic_average,
                                estimate_absorption)
from fbmfluid.errors import ConfigurationError
from fbmfluid.galerkin import GridWorkspace, PhysParams, SpectralField
from fbmfluid.mild import shared_noise
from fbmfluid.noise import ModeSpectrum, NoiseAssumption, stationary_mode_variance
from fbmfluid.specfun import dirichlet_beta, gamma, paper_bound_Z, riemann_zeta

RHS_075 = 0.11794532959743251  # mpmath, tests/oracle_values.py

N = 4
WS = GridWorkspace(N)
SP = WS.spectrum
NOISE = NoiseAssumption("A4", SP)
P = PhysParams(0.5, 1.0, 0.5)
H = 0.52
C1 = 0.05
DT = 0.005


def init_set(norms, seed=0):
    rng = np.random.default_rng(seed)
    return [SpectralField.random(N, rng, 1.5, r) for r in norms]


@pytest.fixture(scope="module")
def Z():
    return shared_noise(NOISE, H, DT, 7, horizon=6)


def test_condition_reference_value():
    rep = condition_check(0.3, 0.75, SP)
    assert rep.rhs == pytest.approx(RHS_075, rel=1e-13)
    composed = 4 ** (2 / 3) / (8 * float(gamma(0.5)) * float(dirichlet_beta(2)) * float(riemann_zeta(2)))
    assert rep.rhs == pytest.approx(composed, rel=1e-14)
    assert rep.lhs == pytest.approx(0.09)
    assert not rep.satisfied


def test_condition_rhs_grows_with_H():
    # Gamma(2H-1) and zeta(4H-1) fall faster than beta(4H-1) rises
    hs = np.linspace(0.51, 0.99, 25)
    rhs = [condition_check(1.0, h, SP).rhs for h in hs]
    assert np.all(np.diff(rhs) > 0)


def test_condition_flips_at_equality():
    r = condition_check(1.0, 0.7, SP).rhs
    c = math.sqrt(r)
    assert condition_check(c * (1 + 1e-9), 0.7, SP).satisfied
    assert not condition_check(c * (1 - 1e-9), 0.7, SP).satisfied
    assert condition_check(c, 0.7, SP) == condition_check(c, 0.7, SP)


def test_condition_rejects_nonpositive_C1():
    with pytest.raises(ConfigurationError):
        condition_check(0.0, 0.7, SP)


def test_condition_window_matches_sqrt_variant():
    # the C2 window is nonempty exactly when C1^2 < lambda1^(3/2) / (8 G)
    rep = condition_check(C1, H, SP)
    G = 0.5 * paper_bound_Z(H)
    assert rep.c2_window_nonempty == (C1 ** 2 < SP.lambda1 ** 1.5 / (8 * G))


def test_ergodic_needs_long_horizon():
    with pytest.raises(ConfigurationError):
        ergodic_average(NOISE, 0.75, 10.0, 0.05, 1)


def test_ergodic_single_mode_matches_stationary_variance():
    sp = ModeSpectrum.square(1)
    noise = NoiseAssumption("A4", sp)
    rep = ergodic_average(noise, 0.7, 25.0, 0.05, 3, n_ensemble=2000, n_time_replicas=8)
    target = stationary_mode_variance(4.0, 0.7) * 2.0
    assert rep.exact_value == pytest.approx(target)
    assert abs(rep.ensemble_mean - target) < 3 * rep.ensemble_se
    assert rep.consistent and rep.below_bound


def test_absorption_with_zero_data(Z):
    rep = estimate_absorption(NOISE, H, P, SP, WS, [SpectralField.zeros(N)], [-2, -3, -4, -5],
                              7, DT, C1, Z=Z)
    assert rep.M == 0.0
    assert rep.plateau and rep.t2_estimate == -2.0
    assert rep.radii[-1] == pytest.approx(rep.rho_H_estimate, rel=1e-6)


def test_absorption_plateau_and_independence_of_M(Z):
    sched = [-2, -3, -4, -5, -6]
    a = estimate_absorption(NOISE, H, P, SP, WS, init_set([0.5, 2.0]), sched, 7, DT, C1, Z=Z)
    b = estimate_absorption(NOISE, H, P, SP, WS, init_set([1.0, 4.0]), sched, 7, DT, C1, Z=Z)
    assert a.plateau and b.plateau and not a.out_of_hypothesis
    assert b.rho_H_estimate == pytest.approx(a.rho_H_estimate, rel=1e-3)
    i2 = a.t0_schedule.index(a.t2_estimate)
    tail = np.array(a.radii[i2:])
    # past t2 the radii settle geometrically onto the plateau
    assert np.all(tail <= a.rho_H_estimate * (1 + 1e-3))
    assert np.all(np.diff(np.abs(np.diff(tail))) < 0)
    assert a.formula_rho_H >= a.rho_H_estimate
    assert a.g2_growth_exponent is not None


def test_absorption_outside_hypothesis_is_labelled(Z):
    rep = estimate_absorption(NOISE, H, P, SP, WS, init_set([1.0]), [-2, -3, -4], 7, DT, 0.01, Z=Z)
    assert rep.out_of_hypothesis


def test_attraction_identical_data(Z):
    u = init_set([1.0])[0]
    rep = attraction_test(NOISE, H, P, SP, WS, u, u, [-1, -2], 7, DT, Z=Z)
    assert rep.distance == [0.0, 0.0]


def test_attraction_linear_closed_form(Z):
    ua = init_set([1.0])[0]
    ub = ua + SpectralField.single_mode(N, 1, 1, 0.3)
    sched = [-1, -2, -3, -4, -5]
    rep = attraction_test(NOISE, H, P, SP, WS, ua, ub, sched, 7, DT, Z=Z, terms=())
    d0 = 0.3 * (math.pi / 2) * math.sqrt(2)
    expect = d0 * np.exp(SP.lambda1 * np.array(rep.t0))
    assert np.allclose(rep.distance, expect, rtol=1e-8, atol=0)
    assert rep.rate == pytest.approx(SP.lambda1, rel=1e-8)


def test_attraction_nonlinear_decay(Z):
    ua, ub = init_set([0.5, 5.0])
    rep = attraction_test(NOISE, H, P, SP, WS, ua, ub, [-1, -2, -3, -4, -5, -6], 7, DT, Z=Z)
    assert rep.monotone and rep.distance[-1] < 1e-6
