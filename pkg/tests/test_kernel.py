import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from steinx.errors import DomainError, IllConditionedError
from steinx.kernel import build_kernel, eval_kernel, kernel_l1_norm, kernel_moments, reproduction_residual

# mpmath monomial 2x2 solve (lam_max = 2, K = 1): tau(1.5) = P(1.5) since w(1.5) = 1
TAU_K1_MID = 2.6054065145200277
# 1e5-point midpoint sum of |tau| (lam_max = 2, K = 1)
L1_K1_RIEMANN = 8.95413712120031


def test_unit_mass_and_first_moment():
    k = build_kernel(2.0, 1)
    m = kernel_moments(k, 1)
    assert abs(m[0] - 1) <= 1e-10
    assert abs(m[1]) <= 1e-8


def test_midpoint_value_matches_monomial_solve():
    k = build_kernel(2.0, 1)
    assert eval_kernel(k, 1.5) == pytest.approx(TAU_K1_MID, rel=1e-10)
    assert eval_kernel(k, 1.5) == pytest.approx(float(k.window(1.5) * k.polynomial(1.5)), rel=1e-15)


# |tau| is ~4e3 times larger than the moments, so quad reports roundoff
@pytest.mark.filterwarnings("ignore::scipy.integrate.IntegrationWarning")
def test_moments_k4_against_scipy():
    k = build_kernel(2.0, 4)
    for j in range(5):
        val, _ = quad(lambda x: x**j * eval_kernel(k, x), 1.0, 2.0, epsabs=1e-10, epsrel=1e-10, limit=200)
        assert abs(val - (1.0 if j == 0 else 0.0)) <= 1e-6


def test_endpoints_and_outside_support():
    k = build_kernel(3.0, 3)
    assert eval_kernel(k, 1.0) == 0.0
    assert eval_kernel(k, 3.0) == 0.0
    assert eval_kernel(k, 6.0) == 0.0
    assert np.all(eval_kernel(k, np.linspace(3.0, 50.0, 100)) == 0.0)


def test_below_one_rejected():
    with pytest.raises(DomainError):
        eval_kernel(build_kernel(2.0, 1), 0.5)


def test_parameter_ranges():
    for lam, K in ((1.0, 2), (11.0, 2), (2.0, 0), (2.0, 9)):
        with pytest.raises(DomainError):
            build_kernel(lam, K)


def test_ill_conditioned_rejected():
    with pytest.raises(IllConditionedError):
        build_kernel(1.05, 8)


def test_l1_norm():
    k = build_kernel(2.0, 1)
    assert kernel_l1_norm(k) == pytest.approx(L1_K1_RIEMANN, abs=1e-6)
    for lam, K in ((2.0, 2), (4.0, 3), (10.0, 3)):
        assert kernel_l1_norm(build_kernel(lam, K)) > 1.0


def test_verified_moments_recorded():
    k = build_kernel(2.0, 2)
    assert len(k.verified_moments) == 3
    assert abs(k.verified_moments[0] - 1) <= 1e-10


@settings(max_examples=40, deadline=None)
@given(lam=st.sampled_from([2.0, 3.0, 5.0, 10.0]), K=st.integers(1, 4),
       y=st.floats(-5, 5), c=st.floats(0.01, 5))
def test_polynomial_reproduction(lam, K, y, c):
    k = build_kernel(lam, K)
    m = kernel_moments(k, K)
    for p in range(K + 1):
        scale = (abs(y) + lam * c) ** p
        assert abs(reproduction_residual(m, p, y, c)) <= 1e-7 * max(scale, 1.0)
