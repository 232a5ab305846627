import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, strategies as st

from kanrbf import kernel as kn
from kanrbf.errors import DomainError, SmoothnessError
from kanrbf.kernel import MaternKernel, psi

from conftest import SUPPORTED

mp.mp.dps = 40


def bessel_oracle(nu, r):
    return float(mp.besselk(nu, r) * mp.mpf(r) ** nu)


@pytest.mark.parametrize("tau,d", SUPPORTED)
def test_values_match_bessel(tau, d):
    k = MaternKernel(tau, d)
    for r in np.linspace(0.05, 12.0, 25):
        want = bessel_oracle(mp.mpf(2 * tau - d) / 2, r)
        assert kn.eval(k, r) == pytest.approx(want, rel=1e-12)


@pytest.mark.parametrize("tau,d", SUPPORTED)
def test_value_at_zero_is_limit(tau, d):
    k = MaternKernel(tau, d)
    assert kn.eval(k, 0.0) == pytest.approx(kn.value_at_zero(k), rel=1e-14)


def test_known_value():
    assert kn.eval(MaternKernel(3, 3), 1.0) == pytest.approx(0.92213700889, rel=1e-10)


@pytest.mark.parametrize("tau,d", [(t, dd) for t, dd in SUPPORTED if t - (dd + 1) // 2 >= 1])
def test_radial_derivatives_by_finite_differences(tau, d):
    k = MaternKernel(tau, d)
    step = 1e-5
    for r in (0.3, 1.0, 2.0, 4.5):
        d1 = (k.value(r + step) - k.value(r - step)) / (2 * step)
        assert k.phi1_over_r(r) * r == pytest.approx(d1, rel=1e-7)
        h2 = 1e-3
        d2 = (k.value(r + h2) - 2 * k.value(r) + k.value(r - h2)) / h2**2
        assert k.phi2(r) == pytest.approx(d2, rel=1e-5, abs=1e-6)


def test_tau5_r2_negative_derivative():
    k = MaternKernel(5, 3)
    v = float(kn.eval_phi1_over_r(k, 2.0)) * 2.0
    assert math.isfinite(v) and v < 0


def test_psi_recursion_identity():
    r = np.linspace(0.01, 8, 50)
    h = 1e-6
    for n in range(0, 5):
        fd = (psi(n, r + h) - psi(n, r - h)) / (2 * h)
        np.testing.assert_allclose(fd, -r * psi(n - 1, r), rtol=1e-7)


def test_psi_minus_one_zero_at_origin():
    assert psi(-1, 0.0) == 0.0
    with pytest.raises(SmoothnessError):
        psi(-2, 1.0)


@pytest.mark.parametrize("tau", [2, 3, 4])
def test_dimension_shift(tau):
    assert kn.dimension_shift_check(tau)
    r = np.linspace(0, 9, 37)
    np.testing.assert_allclose(MaternKernel(tau + 1, 3).value(r), MaternKernel(tau, 1).value(r),
                               rtol=1e-12)


def test_dimension_shift_unsupported():
    assert kn.dimension_shift_check(7) is False


@pytest.mark.parametrize("tau,d", [(1, 3), (7, 3), (0, 1), (6, 1)])
def test_unsupported_orders(tau, d):
    with pytest.raises(DomainError):
        MaternKernel(tau, d)


def test_bad_dimension():
    with pytest.raises(DomainError):
        MaternKernel(3, 2)


@pytest.mark.parametrize("bad", [-0.1, math.nan, math.inf])
def test_bad_radius(bad):
    with pytest.raises(DomainError):
        kn.eval(MaternKernel(3, 3), bad)


def test_rough_kernel_singular_derivative():
    k = MaternKernel(2, 3)  # nu = 1/2
    with pytest.raises(SmoothnessError):
        kn.eval_phi1_over_r(k, 0.0)
    assert np.isfinite(kn.eval_phi1_over_r(k, 0.5))
    with pytest.raises(SmoothnessError):
        k.phi2(0.5)
    with pytest.raises(SmoothnessError):
        k.require_order(1)


def test_gram_symmetric_positive_definite(rng):
    x = rng.normal(size=(30, 3))
    G = kn.gram(MaternKernel(4, 3), x)
    np.testing.assert_array_equal(G, G.T)
    assert np.linalg.eigvalsh(G).min() > 0


@given(st.sampled_from(SUPPORTED), st.floats(0.0, 30.0), st.floats(0.0, 30.0))
def test_positive_and_decreasing(td, a, b):
    k = MaternKernel(*td)
    lo, hi = sorted((a, b))
    va, vb = float(k.value(lo)), float(k.value(hi))
    assert va > 0 and vb >= 0
    assert vb <= va * (1 + 1e-14)
