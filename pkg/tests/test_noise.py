import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from fbmfluid.errors import ConfigurationError, DomainError
from fbmfluid.fbm import TimeGrid, generate_fbm
from fbmfluid.noise import (ModeSpectrum, NoiseAssumption, check_assumption, convolve_field,
                            convolve_mode, mean_square_It, mean_square_Z, mode_variance,
                            one_step_autocovariance, sample_convolution, sample_stationary,
                            stationary_mode_variance, stationary_Z)

# mpmath references (tests/oracle_values.py)
XI_COV = {0: 0.023668567577154585, 1: 0.0097717856515425159, 3: 0.0051467215490104849,
          12: 0.0025562013507908832}
XI_COV_STIFF = 0.00032109750490877319
STATVAR_3 = 0.12791583849331106
VAR_Z_2_05 = 0.14554266036272884


def test_square_spectrum_ordering():
    sp = ModeSpectrum.square(3)
    assert sp.K == 9 and sp.N == 3
    assert sp.lambda1 == 4.0
    assert np.all(np.diff(sp.lam) >= 0)
    assert sp.modes[:3].tolist() == [[1, 1], [1, 2], [2, 1]]
    assert np.allclose(sp.k2, np.sqrt(sp.lam))


def test_spectrum_rejects_small_eigenvalues():
    sp = ModeSpectrum.square(2)
    with pytest.raises(ConfigurationError):
        ModeSpectrum(sp.modes, sp.lam * 0.5, sp.q_diag, sp.phi_diag)


def test_assumption_a1_trace():
    sp = ModeSpectrum.square(30, q=lambda i: i ** -2.0)
    rep = check_assumption(NoiseAssumption("A1", sp))
    assert rep.satisfied
    assert rep.trace_value < math.pi ** 2 / 6 <= rep.trace_value + rep.tail_bound


def test_assumption_a4_vacuous():
    rep = check_assumption(NoiseAssumption.a4(4))
    assert rep.satisfied and rep.trace_value is None


def test_assumption_a2_divergent():
    rep = check_assumption(NoiseAssumption("A2", ModeSpectrum.square(6)))
    assert not rep.satisfied


def test_assumption_variant_validation():
    with pytest.raises(ConfigurationError):
        NoiseAssumption("A4", ModeSpectrum.square(3, q=lambda i: 1 / i))
    with pytest.raises(ConfigurationError):
        NoiseAssumption("A7", ModeSpectrum.square(3))


@pytest.mark.parametrize("lag", [0, 1, 3, 12])
def test_one_step_autocovariance_reference(lag):
    r = one_step_autocovariance(3.0, 0.1, 0.75, 13)
    assert r[lag] == pytest.approx(XI_COV[lag], rel=1e-9)


def test_one_step_autocovariance_stiff_mode():
    assert one_step_autocovariance(50.0, 0.1, 0.6, 2)[1] == pytest.approx(XI_COV_STIFF, rel=1e-9)


@given(st.floats(0.55, 0.95), st.floats(0.1, 200.0), st.floats(0.01, 0.5))
def test_one_step_variance_is_mode_variance(H, lam, dt):
    r0 = one_step_autocovariance(lam, dt, H, 1)[0]
    assert r0 == pytest.approx(mode_variance(lam, dt, H), rel=1e-8)


@given(st.floats(0.55, 0.95), st.floats(0.1, 100.0))
def test_one_step_autocovariance_bounded_by_variance(H, lam):
    r = one_step_autocovariance(lam, 0.05, H, 20)
    assert r[0] > 0 and np.all(np.abs(r[1:]) <= r[0])


def test_stationary_variance_reference():
    assert stationary_mode_variance(3.0, 0.75) == pytest.approx(STATVAR_3, rel=1e-13)
    assert mode_variance(3.0, 200.0, 0.75) == pytest.approx(STATVAR_3, rel=1e-8)


def test_mode_variance_reference():
    assert mode_variance(2.0, 0.5, 0.75) == pytest.approx(VAR_Z_2_05, rel=1e-9)


@given(st.floats(0.55, 0.95), st.floats(0.5, 50.0))
def test_mode_variance_monotone_in_time(H, lam):
    ts = [0.01, 0.1, 0.5, 1.0, 3.0]
    v = [mode_variance(lam, t, H) for t in ts]
    assert np.all(np.diff(v) >= -1e-14)


def test_mean_square_small_time():
    noise = NoiseAssumption.a4(3)
    assert mean_square_It(noise, 0.7, 1e-8) < 1e-8


def test_mean_square_is_sum_of_modes():
    noise = NoiseAssumption.a4(3)
    total = sum(mode_variance(l, 0.7, 0.8) for l in noise.spectrum.lam)
    assert mean_square_It(noise, 0.8, 0.7) == pytest.approx(total, rel=1e-12)


def test_isometry_factor_switch():
    noise = NoiseAssumption.a4(2)
    H = 0.7
    a = mean_square_It(noise, H, 1.0)
    b = mean_square_It(noise, H, 1.0, isometry_constant=False)
    assert a == pytest.approx(H * (2 * H - 1) * b, rel=1e-12)


def test_zero_rate_mode_is_the_path():
    g = TimeGrid(0.0, 0.01, 100)
    p = generate_fbm(g, 0.7, 3)
    assert np.array_equal(convolve_mode(0.0, p), p.values)


def test_pathwise_single_mode_matches_convolve_mode():
    sp = ModeSpectrum.square(1)
    noise = NoiseAssumption("A4", sp)
    g = TimeGrid(0.0, 0.05, 20)
    z = convolve_field(noise, 0.7, g, 5, method="pathwise", substeps=4)
    from fbmfluid.noise import _mode_seed
    p = generate_fbm(TimeGrid(0.0, 0.0125, 80), 0.7, _mode_seed(5, 0))
    assert np.allclose(z.z_coeffs[0], convolve_mode(4.0, p, 4), atol=1e-15)


def test_pathwise_agrees_with_exact_in_mean_square():
    sp = ModeSpectrum.square(1)
    noise = NoiseAssumption("A4", sp)
    g = TimeGrid(0.0, 0.05, 10)
    vals = np.array([convolve_field(noise, 0.75, g, 1, replica=r, method="pathwise", substeps=8).z_coeffs[0, -1]
                     for r in range(3000)])
    target = mode_variance(4.0, 0.5, 0.75)
    se = target * math.sqrt(2 / len(vals))
    assert abs(np.mean(vals ** 2) - target) < 3 * se + 0.02 * target


def test_exact_sampler_moments_five_modes():
    sp = ModeSpectrum.square(3)
    small = ModeSpectrum(sp.modes[:5], sp.lam[:5], sp.q_diag[:5], sp.phi_diag[:5])
    noise = NoiseAssumption("A4", small)
    g = TimeGrid(0.0, 0.05, 10)
    z = sample_convolution(noise, 0.75, g, 2, 4000, keep=[10])[:, 0, :]
    e = np.sum(z ** 2, axis=1)
    target = mean_square_It(noise, 0.75, 0.5)
    assert abs(e.mean() - target) < 3 * e.std() / math.sqrt(len(e))


def test_batch_replica_matches_single():
    noise = NoiseAssumption.a4(2)
    g = TimeGrid(0.0, 0.1, 12)
    batch = sample_convolution(noise, 0.7, g, 8, 3)
    for r in range(3):
        assert np.array_equal(batch[r].T, convolve_field(noise, 0.7, g, 8, replica=r).z_coeffs)


def test_keep_selects_nodes():
    noise = NoiseAssumption.a4(2)
    g = TimeGrid(0.0, 0.1, 12)
    full = sample_convolution(noise, 0.7, g, 8, 2)
    part = sample_convolution(noise, 0.7, g, 8, 2, keep=[0, 5, 12])
    assert np.array_equal(full[:, [0, 5, 12], :], part)


def test_stationary_recursion_and_burn_in():
    noise = NoiseAssumption.a4(2)
    g = TimeGrid(-1.0, 0.01, 100)
    with pytest.raises(ConfigurationError):
        stationary_Z(noise, 0.7, g, 0.5, 3)
    Z = stationary_Z(noise, 0.7, g, 3.0, 3)
    zc = Z.z_coeffs
    assert np.all(zc[:, 0] != 0)
    # the increments after removing the semigroup are the one-step integrals
    lam = noise.spectrum.lam
    xi = zc[:, 1:] - np.exp(-lam * 0.01)[:, None] * zc[:, :-1]
    assert np.all(np.isfinite(xi))


def test_stationary_mode_variances():
    noise = NoiseAssumption.a4(2)
    Z = sample_stationary(noise, 0.75, TimeGrid(0.0, 0.1, 0), 3.0, 4, 4000)[:, 0, :]
    target = stationary_mode_variance(noise.spectrum.lam, 0.75)
    se = target * math.sqrt(2 / (len(Z) - 1))
    assert np.all(np.abs(Z.var(axis=0, ddof=1) - target) < 3 * se)


def test_mean_square_Z_single_mode():
    sp = ModeSpectrum.square(1)
    noise = NoiseAssumption("A4", sp)
    assert mean_square_Z(noise, 0.75) == pytest.approx(2.0 * stationary_mode_variance(4.0, 0.75))


def test_convolve_mode_rejects_negative_rate():
    p = generate_fbm(TimeGrid(0.0, 0.1, 4), 0.7, 1)
    with pytest.raises(DomainError):
        convolve_mode(-1.0, p)
