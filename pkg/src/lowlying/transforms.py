"""Spectral weights, test-function pairs, the H+ Bessel transform and Mellin transforms.

H+(x) = (2i/pi) * integral over R of h(t) J_{2it}(x) t / cosh(pi t) dt.  Since
J_{-2it}(x) is the conjugate of J_{2it}(x) for real x, the integrand pairs up
into -(4/pi) * integral over t > 0 of h(t) Im J_{2it}(x) t / cosh(pi t), which
is what the quadrature evaluates.  The residue form

    H+(x) ~ (4/pi) sum_{k < floor(A)} (-1)^k (k + 1/2) h(-i(k + 1/2)) J_{2k+1}(x)

comes from shifting the contour down to Im t = -floor(A).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Union

import numpy as np
from numpy.polynomial.legendre import leggauss

from .errors import DomainError
from .specfun import bessel_j_all, bessel_j_imag

FOUR_PI = 4 * math.pi
HPLUS_TOL = 1e-13
HPLUS_NOISE_FLOOR = 1e-10
IMAG_TOL = 1e-9


@lru_cache(maxsize=64)
def _gl(n: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = leggauss(n)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def gl_panels(a: float, b: float, panels: int, order: int = 16) -> tuple[np.ndarray, np.ndarray]:
    """Composite Gauss-Legendre nodes and weights on [a, b]."""
    x, w = _gl(order)
    edges = np.linspace(a, b, panels + 1)
    half = np.diff(edges) / 2
    mid = (edges[:-1] + edges[1:]) / 2
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


# ---------------------------------------------------------------------------
# spectral weights
# ---------------------------------------------------------------------------


def _strip_samples(A: float, count: int = 10_000, seed: int = 0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    re = rng.uniform(-40, 40, count)
    im = rng.uniform(-A, A, count)
    return re + 1j * im


@dataclass(frozen=True, eq=False)
class WeightFunction:
    """Even spectral weight h, holomorphic on |Im s| <= A with polynomial decay.

    ``decay_constant`` is the smallest C with |h(s)| <= C (1 + |s|)^{-2-delta}
    over 10^4 sampled strip points; it is recorded, not asserted against a
    target.
    """

    evaluator: Callable[[np.ndarray], np.ndarray]
    strip_height: float
    decay_delta: float
    h_id: str
    check: bool = True
    decay_constant: float = field(init=False, default=math.nan)

    def __post_init__(self):
        if self.strip_height <= 13:
            raise DomainError("strip height A must exceed 13")
        if self.decay_delta <= 0:
            raise DomainError("decay exponent delta must be positive")
        if not self.check:
            return
        pts = _strip_samples(self.strip_height)
        vals = self(pts)
        if np.max(np.abs(vals - self(-pts))) > 1e-10 * max(1.0, np.max(np.abs(vals))):
            raise DomainError(f"weight {self.h_id} is not even")
        real = self(np.linspace(-30, 30, 601))
        if np.any(np.abs(real.imag) > 1e-12) or np.any(real.real < 0):
            raise DomainError(f"weight {self.h_id} is not real and nonnegative on R")
        if not np.any(real.real > 0):
            raise DomainError(f"weight {self.h_id} vanishes identically")
        c = float(np.max(np.abs(vals) * (1 + np.abs(pts)) ** (2 + self.decay_delta)))
        if not math.isfinite(c):
            raise DomainError(f"weight {self.h_id} has no finite decay constant")
        object.__setattr__(self, "decay_constant", c)

    def __call__(self, s):
        return np.asarray(self.evaluator(np.asarray(s, dtype=complex)), dtype=complex)

    def scaled(self, alpha: float) -> "WeightFunction":
        f = self.evaluator
        return WeightFunction(lambda s: alpha * f(s), self.strip_height, self.decay_delta,
                              f"{alpha:g}*{self.h_id}", check=alpha > 0)

    def __add__(self, other: "WeightFunction") -> "WeightFunction":
        f, g = self.evaluator, other.evaluator
        return WeightFunction(lambda s: f(s) + g(s), min(self.strip_height, other.strip_height),
                              min(self.decay_delta, other.decay_delta),
                              f"{self.h_id}+{other.h_id}")

    def cutoff(self, tol: float = 1e-18, t_max: float = 30.0) -> float:
        """A height beyond which |h(t)| t (1 + t) stays below tol (capped at t_max)."""
        t = np.arange(0.25, t_max + 0.25, 0.25)
        env = np.abs(self(t)) * t * (1 + t)
        above = np.flatnonzero(env >= tol * max(1.0, float(env.max())))
        if above.size == 0:
            return 1.0
        return float(min(t_max, t[above[-1]] + 0.5))


def make_weight_gaussian(width: float = 1.0) -> WeightFunction:
    """h(t) = exp(-(t/width)^2) with A = 14 and delta = 1."""
    if width <= 0:
        raise DomainError("width must be positive")
    hid = "gauss" if width == 1.0 else f"gauss{width:g}"
    return WeightFunction(lambda s: np.exp(-(s / width) ** 2), 14.0, 1.0, hid)


# ---------------------------------------------------------------------------
# test functions
# ---------------------------------------------------------------------------


def _check_sigma(sigma: float) -> None:
    if not 0 < sigma < 2:
        raise DomainError(f"support radius must lie in (0, 2), got {sigma}")


@dataclass(frozen=True, eq=False)
class TestFunction:
    """Fourier pair (phi, phi_hat) with phi_hat even, real and supported in [-sigma, sigma].

    ``kinks`` lists interior points where phi_hat may fail to be smooth; the
    quadrature routines put panel boundaries there.
    """

    __test__ = False  # not a pytest class

    sigma: float
    phi_hat: Callable[[np.ndarray], np.ndarray]
    phi: Callable[[np.ndarray], np.ndarray]
    phi_id: str
    kinks: tuple[float, ...] = ()

    def hat(self, u):
        u = np.asarray(u, dtype=float)
        out = np.where(np.abs(u) < self.sigma, self.phi_hat(np.clip(u, -self.sigma, self.sigma)), 0.0)
        return out if out.ndim else float(out)

    def __call__(self, x):
        out = self.phi(np.asarray(x))
        return out if np.ndim(out) else out[()]

    def breakpoints(self) -> np.ndarray:
        pts = {-self.sigma, self.sigma, *self.kinks}
        return np.array(sorted(p for p in pts if -self.sigma <= p <= self.sigma))

    def scaled(self, alpha: float) -> "TestFunction":
        ph, p = self.phi_hat, self.phi
        return TestFunction(self.sigma, lambda u: alpha * ph(u), lambda x: alpha * p(x),
                            f"{alpha:g}*{self.phi_id}", self.kinks)

    def tabulated(self, points: int = 4097) -> "TestFunction":
        """A copy whose phi_hat is linear interpolation of a table (exact for the triangle)."""
        grid = np.unique(np.concatenate([np.linspace(-self.sigma, self.sigma, points),
                                         self.breakpoints()]))
        table = np.asarray(self.phi_hat(grid), dtype=float)
        return TestFunction(self.sigma, lambda u: np.interp(u, grid, table), self.phi,
                            f"{self.phi_id}-tab", self.kinks)


def fourier_of_hat(phi_hat: Callable, sigma: float, x, *, kinks=(0.0,), order: int = 64,
                   panels: int = 16) -> np.ndarray:
    """phi(x) = integral of phi_hat(u) cos(2 pi u x) over [-sigma, sigma] (phi_hat even)."""
    x = np.asarray(x)
    edges = sorted({-sigma, sigma, *[k for k in kinks if -sigma < k < sigma]})
    total = np.zeros(x.shape, dtype=np.result_type(x.dtype, float))
    for a, b in zip(edges[:-1], edges[1:]):
        u, w = gl_panels(a, b, panels, order)
        vals = w * phi_hat(u)
        total = total + np.cos(2 * np.pi * np.multiply.outer(x, u)) @ vals
    return total


def make_test_triangle(sigma: float) -> TestFunction:
    """phi_hat(u) = (1 - |u|/sigma)^+, phi(x) = sigma (sin(pi sigma x)/(pi sigma x))^2."""
    _check_sigma(sigma)
    return TestFunction(
        sigma,
        lambda u: np.maximum(0.0, 1.0 - np.abs(u) / sigma),
        lambda x: sigma * np.sinc(sigma * np.asarray(x)) ** 2,
        f"triangle{sigma:g}",
        (0.0,),
    )


def _bump(u: np.ndarray, sigma: float) -> np.ndarray:
    v = np.asarray(u, dtype=float) / sigma
    inside = np.abs(v) < 1
    out = np.zeros_like(v)
    out[inside] = np.exp(-1.0 / (1.0 - v[inside] ** 2))
    return out


def make_test_bump(sigma: float) -> TestFunction:
    """phi_hat(u) = exp(-1/(1 - (u/sigma)^2)) on |u| < sigma; phi by quadrature."""
    _check_sigma(sigma)

    def hat(u):
        return _bump(u, sigma)

    def phi(x):
        return fourier_of_hat(hat, sigma, x, kinks=(0.0,))

    return TestFunction(sigma, hat, phi, f"bump{sigma:g}", (0.0,))


def katz_sarnak_functional(phi: TestFunction) -> float:
    """phi_hat(0) + phi(0)/2, the orthogonal-symmetry prediction."""
    return float(phi.hat(0.0)) + 0.5 * float(np.real(phi(0.0)))


# ---------------------------------------------------------------------------
# the H+ transform
# ---------------------------------------------------------------------------


def _check_hplus_domain(x: np.ndarray) -> None:
    if np.any(x <= 0) or np.any(x >= FOUR_PI):
        raise DomainError("H+ is evaluated on 0 < x < 4 pi")


def _hplus_quadrature(h: WeightFunction, x: np.ndarray, panels: int, order: int = 16) -> np.ndarray:
    t, w = gl_panels(0.0, h.cutoff(), panels, order)
    hw = (w * h(t).real * t / np.cosh(np.pi * t))
    out = np.empty(x.shape)
    chunk = max(1, 400_000 // t.size)
    for i in range(0, x.size, chunk):
        xs = x[i:i + chunk]
        jv = bessel_j_imag(t[None, :], xs[:, None], check_domain=False)
        out[i:i + chunk] = -(4 / np.pi) * (jv.imag @ hw)
    return out


def hplus_many(h: WeightFunction, x, *, tol: float = HPLUS_TOL, check_domain: bool = True,
               max_panels: int = 256) -> np.ndarray:
    """H+ at an array of points, doubling the t-grid until the change is below tol.

    ``check_domain=False`` allows x >= 4 pi, needed by the level-1 Kloosterman
    terms where c < 4 pi sqrt(mn) occurs.
    """
    x = np.asarray(x, dtype=float)
    flat = x.ravel()
    if check_domain:
        _check_hplus_domain(flat)
    elif np.any(flat <= 0):
        raise DomainError("H+ needs x > 0")
    panels = 16
    prev = _hplus_quadrature(h, flat, panels)
    last_err = math.inf
    while True:
        panels *= 2
        cur = _hplus_quadrature(h, flat, panels)
        err = np.max(np.abs(cur - prev), initial=0.0)
        scale = max(1.0, float(np.max(np.abs(cur), initial=0.0)))
        if err <= tol * scale:
            return cur.reshape(x.shape)
        # rounding in J_{2it} sets a floor; stop once refinement no longer helps
        if err <= HPLUS_NOISE_FLOOR * scale and err > 0.5 * last_err:
            return cur.reshape(x.shape)
        if panels >= max_panels:
            raise ArithmeticError(f"H+ quadrature did not converge (change {err:.2e})")
        prev, last_err = cur, err


def hplus_integral(h: WeightFunction, x: float) -> float:
    """H+(x) for 0 < x < 4 pi by quadrature of the defining integral.

    The symmetric integral over R is also assembled in complex arithmetic and
    its imaginary part checked against 1e-9 before being discarded.
    """
    x = float(x)
    _check_hplus_domain(np.array([x]))
    t, w = gl_panels(-h.cutoff(), h.cutoff(), 64)
    full = (2j / np.pi) * np.sum(w * h(t) * bessel_j_imag(t, x) * t / np.cosh(np.pi * t))
    if abs(full.imag) > IMAG_TOL:
        raise AssertionError(f"H+({x}) has imaginary residue {full.imag:.3e}")
    return float(hplus_many(h, np.array([x]))[0])


def hplus_series(h: WeightFunction, x, *, terms: int | None = None):
    """Residue form (4/pi) sum_{k < terms} (-1)^k (k+1/2) h(-i(k+1/2)) J_{2k+1}(x).

    ``terms`` defaults to floor(A); the neglected contour integral is
    O(x^{2 floor(A)}) with an h-dependent constant.
    """
    xa = np.asarray(x, dtype=float)
    _check_hplus_domain(xa.ravel())
    n = int(math.floor(h.strip_height)) if terms is None else terms
    k = np.arange(n)
    coef = (4 / np.pi) * (-1.0) ** k * (k + 0.5) * h(-1j * (k + 0.5)).real
    jv = bessel_j_all(2 * n, xa.ravel())[1::2][:n]
    out = coef @ jv
    return float(out[0]) if xa.ndim == 0 else out.reshape(xa.shape)


@lru_cache(maxsize=16)
def _linear_constant_cached(h: WeightFunction, points: int) -> float:
    x = np.linspace(FOUR_PI / points, FOUR_PI * (1 - 1e-6), points)
    # H+(x)/x tends to h(-i/2)/pi as x -> 0, where the supremum may sit
    at_zero = abs(float(h(-0.5j).real)) / np.pi
    return max(at_zero, float(np.max(np.abs(hplus_many(h, x)) / x)))


def hplus_linear_constant(h: WeightFunction, points: int = 400) -> float:
    """C_H = max |H+(x)|/x over a grid on (0, 4 pi); the tail bound uses H+(x) <= C_H x."""
    return _linear_constant_cached(h, points)


def hplus_derivative_bounds(h: WeightFunction, points: int = 400) -> tuple[float, float]:
    """Largest finite-difference first and second derivatives of H+ on (0, 4 pi)."""
    x = np.linspace(FOUR_PI / points, FOUR_PI * (1 - 1e-6), points)
    v = hplus_many(h, x)
    d1 = np.gradient(v, x)
    d2 = np.gradient(d1, x)
    return float(np.max(np.abs(d1))), float(np.max(np.abs(d2)))


# ---------------------------------------------------------------------------
# Mellin transforms
# ---------------------------------------------------------------------------

Kind = Union[str, int]


@dataclass(frozen=True)
class MellinQuery:
    """Mellin transform request; ``kind`` is "maass" or an even weight k >= 2."""

    s: complex | np.ndarray
    scale: float
    c: int
    kind: Kind = "maass"

    def __post_init__(self):
        if self.c < 1:
            raise DomainError("modulus c must be >= 1")
        if self.scale < 2:
            raise DomainError("scaling parameter must be >= 2")
        if self.kind != "maass" and (not isinstance(self.kind, int) or self.kind < 2 or self.kind % 2):
            raise DomainError(f"holomorphic weight must be even and >= 2, got {self.kind}")


def _mellin_nodes(phi: TestFunction, scale: float, c: int, kernel: Callable, panels: int,
                  order: int = 32) -> tuple[np.ndarray, np.ndarray]:
    edges = phi.breakpoints()
    us, ws = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        u, w = gl_panels(a, b, panels, order)
        us.append(u)
        ws.append(w)
    u = np.concatenate(us)
    w = np.concatenate(ws)
    arg = FOUR_PI * np.exp(0.5 * u * math.log(scale)) / c
    return u, w * phi.hat(u) * kernel(arg)


def _mellin_eval(s, u, weighted, scale: float) -> np.ndarray:
    s = np.asarray(s, dtype=complex)
    expo = np.exp(np.multiply.outer(s, u) * math.log(scale))
    return expo @ weighted


def _mellin(q: MellinQuery, phi: TestFunction, kernel: Callable, tol: float) -> complex | np.ndarray:
    panels = 4
    u, wk = _mellin_nodes(phi, q.scale, q.c, kernel, panels)
    prev = _mellin_eval(q.s, u, wk, q.scale)
    while True:
        panels *= 2
        u, wk = _mellin_nodes(phi, q.scale, q.c, kernel, panels)
        cur = _mellin_eval(q.s, u, wk, q.scale)
        err = np.max(np.abs(cur - prev))
        if err <= tol * max(1e-300, float(np.max(np.abs(cur)))) or panels >= 128:
            return cur if np.ndim(cur) else complex(cur)
        prev = cur


def mellin_psi(q: MellinQuery, phi: TestFunction, h: WeightFunction, *, tol: float = 1e-10):
    """Psi(s) = integral over [-sigma, sigma] of N^{us} phi_hat(u) H+(4 pi N^{u/2}/c) du.

    This equals (1/log N) times the Mellin transform of
    x -> phi_hat(log x / log N) H+(4 pi sqrt(x)/c).  Vectorised over q.s.
    """
    if q.kind != "maass":
        raise DomainError("mellin_psi is the Maass transform; use mellin_psi_flat for weight k")
    if FOUR_PI * q.scale ** (phi.sigma / 2) / q.c >= FOUR_PI:
        raise DomainError("H+ argument reaches 4 pi on the support: need c > N^{sigma/2}")
    return _mellin(q, phi, lambda x: hplus_many(h, x), tol)


def mellin_psi_flat(q: MellinQuery, phi: TestFunction, *, tol: float = 1e-10):
    """Psi-flat(s): the same integral with J_{k-1} and scale X in place of H+ and N."""
    if q.kind == "maass":
        raise DomainError("mellin_psi_flat needs an even weight k")
    k = int(q.kind)
    return _mellin(q, phi, lambda x: bessel_j_all(k - 1, x)[k - 1], tol)


def mellin_inverse(psi_values: np.ndarray, t: np.ndarray, n, scale: float) -> np.ndarray:
    """(log N / 2 pi) * integral of Psi(it) n^{-it} dt by the trapezoid rule on a uniform t grid.

    Returns an approximation of phi_hat(log n / log N) * kernel(4 pi sqrt(n)/c);
    the log N factor undoes the 1/log N in the definition of Psi.
    """
    n = np.asarray(n, dtype=float)
    dt = t[1] - t[0]
    w = np.full(t.shape, dt)
    w[0] = w[-1] = dt / 2
    phase = np.exp(-1j * np.multiply.outer(np.log(n), t))
    return (phase @ (w * psi_values)).real * math.log(scale) / (2 * np.pi)
