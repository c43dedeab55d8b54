import math

import mpmath as mp
import numpy as np
import pytest
import scipy.special as sps
from hypothesis import given, settings
from hypothesis import strategies as st

from lowlying.errors import DomainError, PoleError
from lowlying.ntcore import character_group, primitive_characters
from lowlying.specfun import (LSeriesHandle, ZeroCountQuery, bessel_j_all, bessel_j_imag, bessel_j_integer,
                              box_zero_count, complex_gamma, completed_l, dirichlet_l, hurwitz_zeta,
                              line_zero_count, log_gamma, rgamma, riemann_zeta, root_number, zero_count,
                              zeta_n)

# high-precision reference values
J_IMAG_ORDER_I_AT_1 = 1.64102417949508226126 - 0.43707501021368306450j
GAMMA_1_PLUS_I = 0.49801566811835604271 - 0.15494982830181068512j
ZETA_HALF_14I = 0.02224114260999358925 - 0.10325812326645005790j
CATALAN = 0.91596559417721901505
ZETA_101_1_PLUS_2I = 0.60464973182764390512 - 0.35412786501245542490j


# -- Gamma ------------------------------------------------------------------------


def test_gamma_classical_values():
    assert complex_gamma(1) == pytest.approx(1, rel=1e-14)
    assert complex_gamma(5) == pytest.approx(24, rel=1e-13)
    assert complex_gamma(0.5) == pytest.approx(math.sqrt(math.pi), rel=1e-13)
    assert complex_gamma(1 + 1j) == pytest.approx(GAMMA_1_PLUS_I, rel=1e-12)


def test_gamma_poles():
    for z in (0, -1, -7):
        with pytest.raises(PoleError):
            complex_gamma(z)
    assert rgamma(-3) == 0


def test_gamma_against_mpmath_grid():
    rng = np.random.default_rng(0)
    z = rng.uniform(-35, 35, 200) + 1j * rng.uniform(-35, 35, 200)
    z = z[np.abs(z) <= 50]
    ref = np.array([complex(mp.gamma(complex(v))) for v in z])
    assert np.max(np.abs(complex_gamma(z) / ref - 1)) < 1e-12
    assert np.max(np.abs(np.exp(log_gamma(z)) / ref - 1)) < 1e-12


@settings(max_examples=200)
@given(st.floats(-20, 20), st.floats(-5, 5))
def test_gamma_reflection(x, y):
    z = complex(x, y)
    if abs(y) < 1e-3 and abs(x - round(x)) < 1e-3:
        return
    val = complex_gamma(z) * complex_gamma(1 - z) * np.sin(np.pi * z) / np.pi
    assert abs(val - 1) < 1e-10


# -- Bessel -------------------------------------------------------------------------


def test_bessel_integer_small_argument():
    assert bessel_j_integer(0, 0.0) == 1
    assert all(bessel_j_integer(k, 0.0) == 0 for k in (1, 5, 30))
    x = 1e-3
    assert bessel_j_integer(1, x) == pytest.approx(x / 2 - x**3 / 16, abs=1e-17)


def test_bessel_integer_against_scipy():
    x = np.linspace(0, 100, 2001)
    for k in (0, 1, 2, 7, 40, 99, 150, 200):
        assert np.max(np.abs(bessel_j_integer(k, x) - sps.jv(k, x))) < 1e-12


def test_bessel_derivative_by_finite_differences():
    x = np.linspace(0.5, 30, 60)
    h = 1e-5
    for k in (1, 3, 10):
        deriv = (bessel_j_integer(k, x + h) - bessel_j_integer(k, x - h)) / (2 * h)
        rhs = bessel_j_integer(k - 1, x) - bessel_j_integer(k + 1, x)
        assert np.max(np.abs(2 * deriv - rhs)) < 1e-8


def test_bessel_three_term_recurrence():
    x = np.linspace(0.1, 50, 300)
    table = bessel_j_all(51, x)
    k = np.arange(1, 51)[:, None]
    resid = table[:-2] + table[2:] - 2 * k / x * table[1:-1]
    assert np.max(np.abs(resid)) < 1e-10


def test_bessel_imag_order():
    x = np.linspace(0.05, 12, 40)
    assert np.max(np.abs(bessel_j_imag(0.0, x) - bessel_j_integer(0, x))) < 1e-12
    for t in (0.3, 2.0, 11.0):
        assert np.allclose(bessel_j_imag(-t, x), np.conj(bessel_j_imag(t, x)), atol=1e-14, rtol=1e-12)
    assert bessel_j_imag(0.5, 1.0) == pytest.approx(J_IMAG_ORDER_I_AT_1, rel=1e-12)
    with pytest.raises(DomainError):
        bessel_j_imag(1.0, 0.0)


def test_bessel_imag_against_mpmath():
    for t in (0.1, 4.0, 25.0, 50.0):
        for x in (0.01, 1.0, 6.0, 12.5):
            ref = complex(mp.besselj(2j * t, x))
            assert abs(bessel_j_imag(t, x) - ref) <= 1e-10 * abs(ref)


# -- zeta and L-functions ------------------------------------------------------------


def test_hurwitz_values():
    assert hurwitz_zeta(2, 1.0) == pytest.approx(math.pi**2 / 6, rel=1e-14)
    assert hurwitz_zeta(3, 0.5) == pytest.approx((2**3 - 1) * hurwitz_zeta(3, 1.0), rel=1e-13)
    with pytest.raises(PoleError):
        hurwitz_zeta(1, 0.3)
    with pytest.raises(DomainError):
        hurwitz_zeta(2, 0.0)


def test_hurwitz_self_convergence():
    s = 0.5 + 14j
    a = riemann_zeta(s)
    b = hurwitz_zeta(s, 1.0, cutoff=80, terms=24)
    assert abs(a - b) < 1e-11
    assert a == pytest.approx(ZETA_HALF_14I, abs=1e-12)


def test_hurwitz_against_mpmath_high():
    rng = np.random.default_rng(5)
    for _ in range(40):
        s = complex(rng.uniform(0, 1), rng.uniform(-200, 200))
        a = rng.uniform(0.05, 1)
        ref = complex(mp.zeta(s, a))
        assert abs(hurwitz_zeta(s, a) - ref) <= 1e-12 * max(1, abs(ref))
    # left of the strip the partial sum grows like M^{1 - Re s} while the value does not,
    # so cancellation in floating point sets a relative floor
    for _ in range(40):
        s = complex(rng.uniform(-1, 4), rng.uniform(-200, 200))
        a = rng.uniform(0.05, 1)
        ref = complex(mp.zeta(s, a))
        assert abs(hurwitz_zeta(s, a) - ref) <= 1e-11 * abs(ref)


def test_dirichlet_l_values():
    chi1 = character_group(1)[0]
    assert dirichlet_l(2, chi1) == pytest.approx(math.pi**2 / 6, rel=1e-14)
    chi4 = [c for c in character_group(4) if not c.is_principal][0]
    alt = sum((-1) ** k / (2 * k + 1) ** 2 for k in range(200_000))
    assert dirichlet_l(2, chi4) == pytest.approx(alt, abs=1e-10)
    assert dirichlet_l(2, chi4) == pytest.approx(CATALAN, abs=1e-13)
    chi0 = character_group(12)[0]
    with pytest.raises(PoleError):
        dirichlet_l(1, chi0)
    assert LSeriesHandle(chi4)(2) == dirichlet_l(2, chi4)


def test_euler_product_at_3():
    chi = [c for c in character_group(7) if not c.is_principal][2]
    from lowlying.ntcore import primes_up_to
    prod = 1.0 + 0j
    for p in primes_up_to(10**5).tolist():
        prod /= 1 - chi(p) * p**-3.0
    assert abs(prod - dirichlet_l(3, chi)) < 1e-10


def test_principal_l_is_zeta_with_factors_removed():
    chi0 = character_group(30)[0]
    s = 2.5 + 3j
    assert dirichlet_l(s, chi0) == pytest.approx(zeta_n(s, 30), rel=1e-12)


def test_zeta_n():
    t = 1.0
    s = 1 + 2j * t
    assert zeta_n(s, 101) == pytest.approx(ZETA_101_1_PLUS_2I, abs=1e-12)
    assert abs(zeta_n(s, 101)) ** 2 == pytest.approx(
        abs(riemann_zeta(s)) ** 2 * abs(1 - 101 ** (-s)) ** 2, rel=1e-12)
    assert zeta_n(1 + 2j, 2) == pytest.approx((1 - 2 ** (-1 - 2j)) * riemann_zeta(1 + 2j), rel=1e-14)
    with pytest.raises(PoleError):
        zeta_n(1, 7)


def test_functional_equation_residuals():
    rng = np.random.default_rng(7)
    chars = [c for q in range(1, 51) for c in primitive_characters(q)]
    worst = 0.0
    for _ in range(100):
        chi = chars[rng.integers(len(chars))]
        s = complex(rng.uniform(-1, 2), rng.uniform(-30, 30))
        a = completed_l(s, chi)
        b = root_number(chi) * completed_l(1 - s, chi.conj())
        worst = max(worst, abs(a - b) / max(abs(a), 1e-300))
    assert worst < 1e-8


# -- zero counting ----------------------------------------------------------------------


def test_zero_count_validation():
    chi = primitive_characters(7)[0]
    with pytest.raises(DomainError):
        ZeroCountQuery(0.4, 10, chi)
    with pytest.raises(DomainError):
        ZeroCountQuery(0.5, 0, chi)
    with pytest.raises(DomainError):
        zero_count(ZeroCountQuery(0.5, 10, character_group(12)[1]))


def test_riemann_zeros():
    chi = character_group(1)[0]
    r = zero_count(ZeroCountQuery(0.5, 20, chi))
    assert r.count == 2 and r.line_count == 2 and r.consistent
    assert zero_count(ZeroCountQuery(0.5, 14.0, chi)).count == 0
    assert zero_count(ZeroCountQuery(0.5, 26.0, chi)).count == 6


def test_no_zeros_below_lowest():
    for chi in primitive_characters(7)[:3] + primitive_characters(11)[:2]:
        _, ords = line_zero_count(chi, 20, step=0.025)
        lowest = float(np.min(np.abs(ords)))
        assert zero_count(ZeroCountQuery(0.5, 0.9 * lowest, chi)).count == 0
        assert zero_count(ZeroCountQuery(0.5, lowest + 0.3, chi)).count >= 1


@pytest.mark.slow
def test_no_zeros_near_one():
    for q in range(3, 51):
        for chi in primitive_characters(q):
            assert zero_count(ZeroCountQuery(0.99, 30, chi)).count == 0


def test_monotone_in_beta():
    chi = primitive_characters(13)[1]
    counts = [zero_count(ZeroCountQuery(b, 15, chi)).count for b in (0.5, 0.6, 0.8, 1.0)]
    assert counts == sorted(counts, reverse=True)


def test_stable_under_refinement():
    for chi in (primitive_characters(5)[0], primitive_characters(8)[0], primitive_characters(23)[3]):
        base = zero_count(ZeroCountQuery(0.5, 12, chi))
        fine = zero_count(ZeroCountQuery(0.5, 12, chi), step=0.025, em_scale=2)
        assert base.count == fine.count == base.line_count
