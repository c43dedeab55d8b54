import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lowlying.errors import DomainError
from lowlying.specfun import bessel_j_all
from lowlying.transforms import (FOUR_PI, MellinQuery, WeightFunction, fourier_of_hat, hplus_derivative_bounds,
                                 hplus_integral, hplus_linear_constant, hplus_many, hplus_series,
                                 katz_sarnak_functional, make_test_bump, make_test_triangle,
                                 make_weight_gaussian, mellin_inverse, mellin_psi, mellin_psi_flat)

H = make_weight_gaussian()


def bump_phi_reference(x, sigma=1.0):
    f = lambda u: mp.exp(-1 / (1 - (u / sigma) ** 2)) * mp.cos(2 * mp.pi * u * x)
    return float(2 * mp.quad(f, [0, sigma / 2, sigma]))


# -- weights and test functions -----------------------------------------------------


def test_gaussian_weight():
    assert H(0.0) == 1
    t = np.linspace(-20, 20, 100)
    assert np.allclose(H(t), H(-t), atol=0)
    assert H(-0.5j) == pytest.approx(math.exp(0.25))
    assert math.isfinite(H.decay_constant) and H.decay_constant > 0
    assert (H.strip_height, H.decay_delta, H.h_id) == (14.0, 1.0, "gauss")


def test_weight_validation():
    with pytest.raises(DomainError):
        WeightFunction(lambda s: np.exp(-s**2), 12.0, 1.0, "narrow")
    with pytest.raises(DomainError):
        WeightFunction(lambda s: s * np.exp(-s**2), 14.0, 1.0, "odd")
    with pytest.raises(DomainError):
        WeightFunction(lambda s: -np.exp(-s**2), 14.0, 1.0, "negative")


def test_triangle_pair():
    for sigma in (0.3, 1.0, 1.9):
        phi = make_test_triangle(sigma)
        assert phi(0.0) == pytest.approx(sigma)
        assert phi.hat(0.0) == 1
        assert phi.hat(sigma / 2) == pytest.approx(0.5)
        assert phi.hat(sigma) == 0 and phi.hat(-2.0) == 0
    with pytest.raises(DomainError):
        make_test_triangle(2.0)
    with pytest.raises(DomainError):
        make_test_bump(0.0)


def test_triangle_fourier_inversion():
    phi = make_test_triangle(1.3)
    x = np.linspace(-6, 6, 50)
    numeric = fourier_of_hat(phi.hat, phi.sigma, x)
    assert np.max(np.abs(numeric - phi(x))) < 1e-8


def test_triangle_round_trip_from_phi():
    # Fourier transform of phi: trapezoid rule on [0, L] plus the exact tail beyond L
    from scipy.special import sici

    sigma, L, n = 1.0, 200.0, 400_001
    phi = make_test_triangle(sigma)
    x = np.linspace(0, L, n)
    w = np.full(n, x[1] - x[0])
    w[0] = w[-1] = w[0] / 2

    def cos_tail(a):
        # integral of cos(a x) / x^2 over [L, inf)
        a = abs(a)
        return np.cos(a * L) / L - a * (np.pi / 2 - sici(a * L)[0])

    u = np.linspace(-sigma, sigma, 41)
    vals = phi(x) * w
    body = 2 * np.array([np.dot(vals, np.cos(2 * np.pi * ui * x)) for ui in u])
    # phi(x) = (1 - cos(2 pi sigma x)) / (2 pi^2 sigma x^2)
    tail = np.array([(2 * cos_tail(2 * np.pi * ui) - cos_tail(2 * np.pi * (sigma + ui))
                      - cos_tail(2 * np.pi * (sigma - ui))) / (2 * np.pi**2 * sigma) for ui in u])
    assert np.max(np.abs(body + tail - phi.hat(u))) < 1e-6


def test_bump_pair():
    phi = make_test_bump(1.0)
    assert phi.hat(1.0) == 0 and phi.hat(-1.0) == 0
    assert phi.hat(0.0) == pytest.approx(math.exp(-1))
    x = np.linspace(0, 5, 23)
    assert np.max(np.abs(phi(x) - phi(-x))) < 1e-12
    assert phi(1.0) == pytest.approx(bump_phi_reference(1.0), abs=1e-10)
    xs = np.linspace(-4, 4, 50)
    assert np.max(np.abs(phi(xs) - np.array([bump_phi_reference(v) for v in xs]))) < 1e-8


@settings(max_examples=60)
@given(st.floats(0.05, 1.95), st.floats(-5, 5))
def test_test_functions_even(sigma, x):
    for phi in (make_test_triangle(sigma), make_test_bump(sigma)):
        assert phi(x) == pytest.approx(phi(-x), abs=1e-12)
        assert phi.hat(x / 3) == phi.hat(-x / 3)


def test_katz_sarnak():
    assert katz_sarnak_functional(make_test_triangle(1.0)) == pytest.approx(1.5)
    assert katz_sarnak_functional(make_test_triangle(1.0).scaled(0.0)) == 0
    phi = make_test_bump(0.7)
    integral = float(fourier_of_hat(phi.hat, phi.sigma, np.array([0.0]))[0])
    assert katz_sarnak_functional(phi) == pytest.approx(phi.hat(0.0) + integral / 2, rel=1e-12)


# -- H+ -----------------------------------------------------------------------------


def test_hplus_small_argument():
    assert abs(hplus_integral(H, 1e-3)) <= 1e-2
    ratio = hplus_integral(H, 1e-2) / (1e-2 * math.exp(0.25) / math.pi)
    assert 0.99 <= ratio <= 1.01


def test_hplus_domain():
    for x in (0.0, -1.0, FOUR_PI, 20.0):
        with pytest.raises(DomainError):
            hplus_integral(H, x)
        with pytest.raises(DomainError):
            hplus_series(H, x)


def test_hplus_routes_agree_at_small_x():
    # the Gaussian's residue coefficients grow like e^{(k+1/2)^2}, so the truncated
    # series only tracks the integral for very small x
    for x in (1e-3, 1e-2):
        assert hplus_integral(H, x) == pytest.approx(hplus_series(H, x), abs=1e-8)


def test_hplus_one_term_truncation():
    # the gap is the k = 1 term, (4/pi)(3/2) e^{9/4} J_3(x), about 3.8e-10 at x = 1e-3
    x = 1e-3
    gap = hplus_series(H, x, terms=1) - hplus_series(H, x)
    k1 = (4 / np.pi) * 1.5 * math.exp(2.25) * (x / 2) ** 3 / 6
    assert gap == pytest.approx(k1, rel=1e-5)
    assert abs(gap) / hplus_series(H, x) < 1e-6


def test_hplus_against_mpmath():
    for x in (0.3, 2.0, 7.5):
        f = lambda t: mp.exp(-t**2) * mp.im(mp.besselj(2j * t, x)) * t / mp.cosh(mp.pi * t)
        ref = float(-(4 / mp.pi) * mp.quad(f, [0, 2, 4, 7]))
        assert hplus_integral(H, x) == pytest.approx(ref, abs=1e-12)


def test_hplus_linear_in_h():
    h2 = make_weight_gaussian(2.0)
    combo = H.scaled(0.3) + h2.scaled(1.7)
    x = np.linspace(0.05, 12, 40)
    lhs = hplus_many(combo, x)
    rhs = 0.3 * hplus_many(H, x) + 1.7 * hplus_many(h2, x)
    assert np.max(np.abs(lhs - rhs)) < 1e-10


def test_series_remainder_exponent():
    # successive truncations differ by the k = floor(A) - 1 term, of order x^{2 floor(A) - 1}
    A = int(H.strip_height)
    x = np.geomspace(0.05, 0.5, 12)
    diff = np.abs(hplus_series(H, x, terms=A) - hplus_series(H, x, terms=A - 1))
    slope = np.polyfit(np.log(x), np.log(diff), 1)[0]
    assert slope >= 2 * A - 1 - 0.01


def test_derivatives_bounded():
    d1, d2 = hplus_derivative_bounds(H)
    assert d1 < 1 and d2 < 2
    c = hplus_linear_constant(H)
    x = np.linspace(0.01, FOUR_PI - 0.01, 200)
    assert np.all(np.abs(hplus_many(H, x)) <= c * x * (1 + 1e-9) + 1e-12)


# -- Mellin transforms -----------------------------------------------------------------

RE = np.linspace(-1, 1, 9)
IM = np.linspace(-20, 20, 41)
GRID = (RE[:, None] + 1j * IM[None, :]).ravel()
OFFSET = ((RE[:-1] + 0.125)[:, None] + 1j * (IM[:-1] + 0.5)[None, :]).ravel()


def psi_ratio(s, N, c, phi):
    v = mellin_psi(MellinQuery(s, N, c), phi, H)
    return np.abs(v) * (np.abs(s) + 1) ** 2 * c / N ** (phi.sigma * np.abs(s.real + 0.5))


def flat_ratio(s, X, c, k, phi):
    v = mellin_psi_flat(MellinQuery(s, X, c, k), phi)
    return np.abs(v) * (np.abs(s) + 1) ** 2 * c ** (k - 1) / X ** (phi.sigma * np.abs(s.real + (k - 1) / 2))


def test_mellin_query_validation():
    with pytest.raises(DomainError):
        MellinQuery(0.5, 101, 0)
    with pytest.raises(DomainError):
        MellinQuery(0.5, 1, 3)
    with pytest.raises(DomainError):
        MellinQuery(0.5, 101, 3, kind=3)
    with pytest.raises(DomainError):
        mellin_psi(MellinQuery(0.5, 101, 10), make_test_triangle(1.0), H)


def test_psi_bound_shape():
    phi = make_test_triangle(1.0)
    base = max(psi_ratio(GRID, 101, c, phi).max() for c in (11, 50, 10**5))
    for N, c in ((1009, 40), (1009, 10**5), (10007, 120)):
        assert psi_ratio(GRID, N, c, phi).max() <= 1.01 * base
    assert psi_ratio(OFFSET, 101, 17, phi).max() <= 1.01 * base


def test_psi_flat_bound_shape():
    phi = make_test_triangle(1.0)
    for k in (2, 4):
        base = max(flat_ratio(GRID, 101, c, k, phi).max() for c in (1, 5, 10**4))
        for X, c in ((1009, 3), (1009, 10**4), (10007, 30)):
            assert flat_ratio(GRID, X, c, k, phi).max() <= 1.01 * base
        assert flat_ratio(OFFSET, 101, 7, k, phi).max() <= 1.01 * base


def test_psi_flat_linear_in_inverse_c():
    phi = make_test_triangle(0.5)
    s = np.array([0.2 + 1j, -0.5 + 3j])
    a = mellin_psi_flat(MellinQuery(s, 101, 10**6, 2), phi)
    b = mellin_psi_flat(MellinQuery(s, 101, 2 * 10**6, 2), phi)
    assert np.allclose(a, 2 * b, rtol=1e-9)


def test_psi_entire_contour_integrals():
    phi = make_test_triangle(1.0)
    for center in (0.0, -0.5 + 2j, 0.7 - 5j, -1 + 10j):
        th = np.linspace(0, 2 * np.pi, 257)[:-1]
        z = center + 0.4 * np.exp(1j * th)
        vals = mellin_psi(MellinQuery(z, 101, 20), phi, H)
        integral = np.mean(vals * 0.4j * np.exp(1j * th)) * 2 * np.pi
        assert abs(integral) <= 1e-8


def test_mellin_inversion_round_trip():
    phi = make_test_bump(1.0)
    t = np.linspace(-60, 60, 4801)
    n = np.array([2, 3, 5, 8, 13, 21, 34, 55, 70, 100])
    N, c = 101, 20
    psi = mellin_psi(MellinQuery(1j * t, N, c), phi, H)
    ref = phi.hat(np.log(n) / np.log(N)) * hplus_many(H, FOUR_PI * np.sqrt(n) / c)
    assert np.max(np.abs(mellin_inverse(psi, t, n, N) - ref)) < 1e-6
    for k in (2, 4):
        psi = mellin_psi_flat(MellinQuery(1j * t, N, 3, k), phi)
        ref = phi.hat(np.log(n) / np.log(N)) * bessel_j_all(k - 1, FOUR_PI * np.sqrt(n) / 3)[k - 1]
        assert np.max(np.abs(mellin_inverse(psi, t, n, N) - ref)) < 1e-6


def test_exponent_factor_minimal_on_half_line():
    N, sigma = 1009, 1.0
    re = np.linspace(-1, 1, 201)
    factor = N ** (sigma * np.abs(re + 0.5))
    assert factor.min() == pytest.approx(1.0)
    assert re[np.argmin(factor)] == pytest.approx(-0.5)
