import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from fbmfluid.errors import DomainError
from fbmfluid.specfun import (dirichlet_beta, gamma, paper_bound_It, paper_bound_Z,
                              quadrant_lattice_exact, quadrant_lattice_sum, riemann_zeta)

# reference values from tests/oracle_values.py (mpmath, 30 digits)
GAMMA_04 = 2.2181595437576405
ZETA_3 = 1.2020569031595943
ZETA_15 = 2.6123753486854883
CATALAN = 0.91596559417721902
BETA_15 = 0.86450265346120204
LATTICE_3 = 0.14738534191651172
LATTICE_15 = 1.0563485176156433
BOUND_IT = {0.6: 11.980649705154029, 0.75: 4.1288546895065867, 0.9: 2.5549597822093373}
BOUND_Z = {0.6: 24.271772513568567, 0.75: 5.3411231042178535, 0.9: 2.8984184308181741}


def test_gamma_values():
    assert float(gamma(1)) == pytest.approx(1.0, abs=1e-15)
    assert float(gamma(0.5)) == pytest.approx(math.sqrt(math.pi), rel=1e-14)
    assert float(gamma(0.4)) == pytest.approx(GAMMA_04, rel=1e-13)


@given(st.floats(0.05, 20.0))
def test_gamma_matches_stdlib(s):
    assert float(gamma(s)) == pytest.approx(math.gamma(s), rel=1e-12)


@given(st.floats(0.1, 10.0))
def test_gamma_recurrence(s):
    assert float(gamma(s + 1)) == pytest.approx(s * float(gamma(s)), rel=1e-12)


def test_gamma_rejects_poles():
    with pytest.raises(DomainError):
        gamma(0.0)
    with pytest.raises(DomainError):
        gamma(-2.0)


def test_zeta_values():
    assert float(riemann_zeta(2)) == pytest.approx(math.pi ** 2 / 6, rel=1e-14)
    assert float(riemann_zeta(4)) == pytest.approx(math.pi ** 4 / 90, rel=1e-14)
    assert float(riemann_zeta(3)) == pytest.approx(ZETA_3, rel=1e-14)
    assert float(riemann_zeta(1.5)) == pytest.approx(ZETA_15, rel=1e-13)


def test_zeta_error_bound_is_honest():
    r = riemann_zeta(1.08)
    from scipy.special import zeta
    assert abs(r.value - zeta(1.08)) <= r.abs_error_bound
    with pytest.raises(DomainError):
        riemann_zeta(1.0)


def test_beta_values():
    assert float(dirichlet_beta(1)) == pytest.approx(math.pi / 4, rel=1e-14)
    assert float(dirichlet_beta(3)) == pytest.approx(math.pi ** 3 / 32, rel=1e-14)
    assert float(dirichlet_beta(2)) == pytest.approx(CATALAN, rel=1e-14)
    assert float(dirichlet_beta(1.5)) == pytest.approx(BETA_15, rel=1e-14)


@given(st.floats(1.01, 8.0))
def test_beta_between_alternating_partial_sums(s):
    b = float(dirichlet_beta(s))
    assert 1 - 3.0 ** -s <= b <= 1.0


def test_lattice_sum_single_term():
    assert float(quadrant_lattice_sum(3, 1)) == pytest.approx(2.0 ** -3, rel=1e-15)


def test_lattice_sum_against_identity():
    r = quadrant_lattice_sum(3, 1000)
    assert float(quadrant_lattice_exact(3)) == pytest.approx(LATTICE_3, rel=1e-13)
    assert abs(r.value - LATTICE_3) <= r.abs_error_bound + 1e-12
    assert float(quadrant_lattice_exact(1.5)) == pytest.approx(LATTICE_15, rel=1e-13)


@given(st.floats(1.2, 4.0), st.integers(2, 60))
def test_lattice_sum_monotone_in_cutoff(s, n):
    assert quadrant_lattice_sum(s, n).value >= quadrant_lattice_sum(s, n - 1).value


@pytest.mark.parametrize("H", [0.6, 0.75, 0.9])
def test_paper_bounds(H):
    assert paper_bound_It(H) == pytest.approx(BOUND_IT[H], rel=1e-13)
    assert paper_bound_Z(H) == pytest.approx(BOUND_Z[H], rel=1e-13)


def test_bound_It_composes_special_functions():
    expect = 2 * float(gamma(0.5)) * float(dirichlet_beta(3)) * float(riemann_zeta(3))
    assert paper_bound_It(0.75) == pytest.approx(expect, rel=1e-14)
    expect = 2 * float(gamma(0.5)) * float(dirichlet_beta(2)) * float(riemann_zeta(2))
    assert paper_bound_Z(0.75) == pytest.approx(expect, rel=1e-14)


def test_bound_It_dominates_truncated_lattice():
    lhs = float(quadrant_lattice_sum(3, 10_000)) * float(gamma(0.5))
    assert paper_bound_It(0.75) > lhs


def test_bound_limit_at_one():
    limit = 2 * float(dirichlet_beta(4)) * float(riemann_zeta(4))
    assert paper_bound_It(1 - 1e-9) == pytest.approx(limit, rel=1e-6)


@given(st.floats(0.501, 0.999))
def test_bounds_positive_and_finite(H):
    for f in (paper_bound_It, paper_bound_Z):
        v = f(H)
        assert np.isfinite(v) and v > 0


@pytest.mark.parametrize("H", [0.5, 1.0, 0.3])
def test_bounds_reject_out_of_range(H):
    with pytest.raises(DomainError, match=r"\(1/2, 1\)"):
        paper_bound_It(H)
