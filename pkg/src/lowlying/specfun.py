"""Complex special functions: Gamma, Bessel J, Hurwitz zeta, Dirichlet L and zero counts.

Everything here is vectorised over numpy arrays.  Gamma uses the g = 7,
nine-coefficient Lanczos approximation with reflection left of Re z = 1/2;
Hurwitz zeta uses Euler-Maclaurin with cutoff max(20, 2|Im s|) and twelve
Bernoulli corrections unless told otherwise.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np

from .errors import DomainError, PoleError, UnstableCountError
from .ntcore import DirichletCharacter, factorize, gauss_sum

log = logging.getLogger(__name__)

_LANCZOS_G = 7.0
_LANCZOS = (
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
)
_HALF_LOG_2PI = 0.5 * math.log(2 * math.pi)


def _is_nonpositive_integer(z: np.ndarray) -> np.ndarray:
    return (z.imag == 0) & (z.real <= 0) & (z.real == np.round(z.real))


def _loggamma_right(z: np.ndarray) -> np.ndarray:
    """A logarithm of Gamma(z) for Re z >= 1/2."""
    z = z - 1
    x = np.full_like(z, _LANCZOS[0])
    for i in range(1, 9):
        x = x + _LANCZOS[i] / (z + i)
    t = z + _LANCZOS_G + 0.5
    return _HALF_LOG_2PI + (z + 0.5) * np.log(t) - t + np.log(x)


def log_gamma(z):
    """A branch of log Gamma(z); exp of the result is Gamma(z).

    The imaginary part is not normalised to the principal branch, which is
    irrelevant for every use here (all callers exponentiate).
    """
    z = np.asarray(z, dtype=complex)
    if np.any(_is_nonpositive_integer(z)):
        raise PoleError("Gamma has a pole at a non-positive integer")
    left = z.real < 0.5
    out = np.empty_like(z)
    out[~left] = _loggamma_right(z[~left])
    if left.any():
        zl = z[left]
        out[left] = (math.log(math.pi) - np.log(np.sin(np.pi * zl))
                     - _loggamma_right(1 - zl))
    return out if out.ndim else out[()]


def complex_gamma(z):
    """Gamma(z) for complex z; relative error about 1e-14 for |z| <= 50."""
    z = np.asarray(z, dtype=complex)
    if np.any(_is_nonpositive_integer(z)):
        raise PoleError("Gamma has a pole at a non-positive integer")
    left = z.real < 0.5
    out = np.empty_like(z)
    out[~left] = np.exp(_loggamma_right(z[~left]))
    if left.any():
        zl = z[left]
        out[left] = np.pi / (np.sin(np.pi * zl) * np.exp(_loggamma_right(1 - zl)))
    return out if out.ndim else complex(out)


def rgamma(z):
    """1/Gamma(z), zero at the poles."""
    z = np.asarray(z, dtype=complex)
    poles = _is_nonpositive_integer(z)
    out = np.zeros_like(z)
    if (~poles).any():
        out[~poles] = 1.0 / complex_gamma(z[~poles])
    return out if out.ndim else complex(out)


# ---------------------------------------------------------------------------
# Bessel functions
# ---------------------------------------------------------------------------


def bessel_j_all(kmax: int, x) -> np.ndarray:
    """J_0(x), ..., J_kmax(x) by Miller's backward recurrence.

    Returns an array of shape (kmax + 1, *x.shape).  Normalisation uses
    J_0 + 2 (J_2 + J_4 + ...) = 1, which keeps the absolute error near
    machine precision for 0 <= x <= 100.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if np.any(x < 0):
        raise DomainError("bessel_j_integer needs x >= 0")
    out = np.zeros((kmax + 1, x.size))
    zero = x == 0
    xs = x[~zero]
    if xs.size:
        xmax = float(xs.max())
        top = max(kmax, int(xmax)) + 30 + int(math.sqrt(60 * (max(kmax, xmax) + 10)))
        top += top % 2
        jp1 = np.zeros_like(xs)
        j = np.full_like(xs, 1e-300)
        vals = np.zeros((kmax + 1, xs.size))
        norm = np.zeros_like(xs)
        for m in range(top, 0, -1):
            jm1 = 2.0 * m / xs * j - jp1
            jp1, j = j, jm1
            # j now holds the unnormalised J_{m-1}
            if m - 1 <= kmax:
                vals[m - 1] = j
            if (m - 1) % 2 == 0 and m - 1 > 0:
                norm += 2 * j
            big = np.abs(j) > 1e250
            if big.any():
                j[big] *= 1e-250
                jp1[big] *= 1e-250
                vals[:, big] *= 1e-250
                norm[big] *= 1e-250
        norm += j
        out[:, ~zero] = vals / norm
    if zero.any():
        out[0, zero] = 1.0
    return out


def bessel_j_integer(k: int, x):
    """J_k(x) for integer order 0 <= k <= 200."""
    if k < 0 or k > 200:
        raise DomainError(f"order must lie in [0, 200], got {k}")
    arr = np.asarray(x, dtype=float)
    vals = bessel_j_all(k, arr)[k]
    return float(vals[0]) if arr.ndim == 0 else vals.reshape(arr.shape)


def bessel_j_imag(t, x, *, check_domain: bool = True):
    """J_{2it}(x) from its power series; broadcasts over t and x.

    Terms are generated by the ratio -(x/2)^2 / (m (m + 2it)) and summed until
    they fall below 1e-17 of the largest term seen past the peak.
    """
    t = np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise DomainError("bessel_j_imag needs x > 0")
    if check_domain and np.any(x >= 4 * np.pi):
        raise DomainError("bessel_j_imag is used on 0 < x < 4 pi")
    t, x = np.broadcast_arrays(t, x)
    nu = 2j * t
    term = np.exp(nu * np.log(x / 2) - log_gamma(1 + nu))
    total = term.copy()
    scale = np.abs(term)
    q = -(x / 2) ** 2
    m = 0
    peak = float(np.max(x)) / 2 + 2
    while True:
        m += 1
        term = term * q / (m * (m + nu))
        total = total + term
        mag = np.abs(term)
        scale = np.maximum(scale, mag)
        if m > peak and np.all(mag <= 1e-17 * scale):
            break
        if m > 2000:
            raise ArithmeticError("Bessel series failed to converge")
    return total if total.ndim else complex(total)


# ---------------------------------------------------------------------------
# zeta and L-functions
# ---------------------------------------------------------------------------


@lru_cache(maxsize=None)
def bernoulli_even(p: int) -> tuple[float, ...]:
    """B_2, B_4, ..., B_2p as floats, from the Akiyama-Tanigawa recurrence."""
    out = []
    a = [Fraction(0)] * (2 * p + 1)
    for m in range(2 * p + 1):
        a[m] = Fraction(1, m + 1)
        for j in range(m, 0, -1):
            a[j - 1] = j * (a[j - 1] - a[j])
        if m >= 2 and m % 2 == 0:
            out.append(a[0])
    return tuple(float(b) for b in out)


def hurwitz_zeta(s, a, *, cutoff: int | None = None, terms: int = 12):
    """zeta(s, a) = sum_{n>=0} (n + a)^{-s} by Euler-Maclaurin, broadcasting s and a."""
    s = np.asarray(s, dtype=complex)
    a = np.asarray(a, dtype=float)
    if np.any((s.real == 1) & (s.imag == 0)):
        raise PoleError("Hurwitz zeta has a pole at s = 1")
    if np.any(a <= 0) or np.any(a > 1):
        raise DomainError("Hurwitz parameter must lie in (0, 1]")
    s, a = np.broadcast_arrays(s, a)
    if cutoff is None:
        cutoff = max(20, int(math.ceil(2 * float(np.max(np.abs(s.imag), initial=0.0)))))
    total = np.zeros(s.shape, dtype=complex)
    for n in range(cutoff):
        total += np.exp(-s * np.log(n + a))
    tail = cutoff + a
    logt = np.log(tail)
    total += np.exp((1 - s) * logt) / (s - 1) + 0.5 * np.exp(-s * logt)
    rising = s.copy()
    power = np.exp(-(s + 1) * logt)
    fact = 2.0
    for j, b in enumerate(bernoulli_even(terms), start=1):
        total += b / fact * rising * power
        rising = rising * (s + 2 * j - 1) * (s + 2 * j)
        power = power / tail**2
        fact *= (2 * j + 1) * (2 * j + 2)
    return total if total.ndim else complex(total)


def digamma(a, *, cutoff: int = 20, terms: int = 12):
    """psi(a) for real a > 0: minus the constant term of zeta(s, a) at s = 1, by Euler-Maclaurin."""
    a = np.asarray(a, dtype=float)
    if np.any(a <= 0):
        raise DomainError("digamma is evaluated here for a > 0 only")
    total = np.zeros(a.shape)
    for n in range(cutoff):
        total += 1 / (n + a)
    tail = cutoff + a
    total += -np.log(tail) + 0.5 / tail
    for j, b in enumerate(bernoulli_even(terms), start=1):
        total += b / (2 * j) * tail ** (-2 * j)
    out = -total
    return out if out.ndim else float(out)


def riemann_zeta(s, **kw):
    return hurwitz_zeta(s, 1.0, **kw)


@dataclass(frozen=True)
class LSeriesHandle:
    character: DirichletCharacter
    evaluation_precision: float = 1e-12

    def __post_init__(self):
        if self.character.modulus < 1:
            raise DomainError("character modulus must be >= 1")

    def __call__(self, s, **kw):
        return dirichlet_l(s, self.character, **kw)


def dirichlet_l(s, chi: DirichletCharacter, **kw):
    """L(s, chi) = q^{-s} sum_a chi(a) zeta(s, a/q)."""
    s = np.asarray(s, dtype=complex)
    q = chi.modulus
    if chi.is_principal and np.any((s.real == 1) & (s.imag == 0)):
        raise PoleError("L(s, chi_0) has a pole at s = 1")
    if q == 1:
        return hurwitz_zeta(s, 1.0, **kw)
    vals = chi.values()
    res = np.flatnonzero(np.abs(vals) > 0.5)
    flat = s.reshape(-1)
    out = np.empty(flat.shape, dtype=complex)
    # the Hurwitz poles cancel since the character sums to zero
    at_one = (flat.real == 1) & (flat.imag == 0)
    out[at_one] = -(digamma(res / q) @ vals[res]) / q
    rest = np.flatnonzero(~at_one)
    chunk = max(1, 200_000 // max(1, res.size))
    for i in range(0, rest.size, chunk):
        idx = rest[i:i + chunk]
        ss = flat[idx, None]
        hz = hurwitz_zeta(ss, res[None, :] / q, **kw)
        out[idx] = np.exp(-ss[:, 0] * math.log(q)) * (hz @ vals[res])
    out = out.reshape(s.shape)
    return out if out.ndim else complex(out)


def zeta_n(s, N: int, **kw):
    """zeta(s) with the Euler factors at primes dividing N removed."""
    if N < 1:
        raise DomainError("N must be >= 1")
    s = np.asarray(s, dtype=complex)
    out = riemann_zeta(s, **kw)
    for p in factorize(N) if N > 1 else []:
        out = out * (1 - np.exp(-s * math.log(p)))
    return out


def root_number(chi: DirichletCharacter) -> complex:
    """W(chi) = tau(chi) / (i^a sqrt(q)) for primitive chi."""
    if not chi.is_primitive:
        raise DomainError("root number is defined here for primitive characters only")
    return gauss_sum(chi) / (1j**chi.parity * math.sqrt(chi.modulus))


def completed_l(s, chi: DirichletCharacter, **kw):
    """(q/pi)^{(s+a)/2} Gamma((s+a)/2) L(s, chi); for q = 1 also times s(s-1)/2."""
    s = np.asarray(s, dtype=complex)
    q = chi.modulus
    a = chi.parity
    w = (s + a) / 2
    gam = np.exp(w * math.log(q / math.pi) + log_gamma(w))
    if q == 1:
        out = np.empty_like(s)
        at_one = (s == 1)
        rest = ~at_one
        out[rest] = 0.5 * s[rest] * (s[rest] - 1) * gam[rest] * riemann_zeta(s[rest], **kw)
        # residue of zeta at 1 is 1 and Gamma(1/2) pi^{-1/2} = 1
        out[at_one] = 0.5
        return out if out.ndim else complex(out)
    return gam * dirichlet_l(s, chi, **kw)


# ---------------------------------------------------------------------------
# zero counting
# ---------------------------------------------------------------------------


# products xi psi in the grand density sum reach modulus k Q = 300
ZERO_COUNT_MAX_MODULUS = 300
ZERO_COUNT_MAX_HEIGHT = 50


@dataclass(frozen=True)
class ZeroCountQuery:
    beta: float
    T: float
    character: DirichletCharacter

    def __post_init__(self):
        if not 0.5 <= self.beta <= 1:
            raise DomainError(f"beta must lie in [1/2, 1], got {self.beta}")
        if self.T <= 0:
            raise DomainError("T must be positive")


@dataclass(frozen=True)
class ZeroCountResult:
    count: int
    line_count: int | None
    consistent: bool
    winding: float
    left_edge: float
    height: float

    def __int__(self) -> int:
        return self.count


def _winding(f, path: np.ndarray, *, max_depth: int = 40, tol: float = math.pi / 6):
    """Total argument change of f along a polyline, refining segments adaptively."""
    pts = list(path)
    vals = list(f(np.array(pts)))
    total = 0.0
    stack = [(pts[i], pts[i + 1], vals[i], vals[i + 1], 0) for i in range(len(pts) - 1)]
    # process segments in order so the result is deterministic
    stack.reverse()
    while stack:
        batch = []
        while stack and len(batch) < 512:
            batch.append(stack.pop())
        mids = np.array([(z0 + z1) / 2 for z0, z1, *_ in batch])
        mvals = f(mids) if len(batch) else []
        todo = []
        for (z0, z1, f0, f1, depth), zm, fm in zip(batch, mids, mvals):
            d0 = np.angle(fm / f0)
            d1 = np.angle(f1 / fm)
            ratio = abs(fm) / max(abs(f0), abs(f1), 1e-300)
            if abs(d0) < tol and abs(d1) < tol and 0.2 < ratio < 5:
                total += d0 + d1
            elif depth >= max_depth:
                raise UnstableCountError("argument-principle contour passes too close to a zero")
            else:
                todo.append((z0, zm, f0, fm, depth + 1))
                todo.append((zm, z1, fm, f1, depth + 1))
        # keep traversal order: earlier segments processed first
        stack.extend(reversed(todo))
    return total


def _rectangle(left: float, right: float, T: float, step: float) -> np.ndarray:
    def seg(a: complex, b: complex) -> np.ndarray:
        n = max(2, int(math.ceil(abs(b - a) / step)))
        return a + (b - a) * np.arange(n) / n

    corners = [complex(left, -T), complex(right, -T), complex(right, T), complex(left, T)]
    parts = [seg(corners[i], corners[(i + 1) % 4]) for i in range(4)]
    return np.concatenate(parts + [np.array([corners[0]])])


def box_zero_count(chi: DirichletCharacter, beta: float, T: float, *, step: float = 0.05,
                   right: float = 1.5, em_scale: int = 1, edge_shift: float = 1e-3,
                   max_shifts: int = 3) -> tuple[int, float, float, float]:
    """Zeros of the completed L-function in [beta, right] x [-T, T] by the argument principle.

    Returns (count, winding, left edge used, height used).  For beta = 1/2 the
    left edge starts at 1/2 - edge_shift so that zeros on the line are counted.
    """
    kw = _em_kwargs(T, em_scale)

    def f(z):
        return completed_l(z, chi, **kw)

    left = beta - edge_shift if beta == 0.5 else beta
    height = T
    for _ in range(max_shifts + 1):
        try:
            w = _winding(f, _rectangle(left, right, height, step))
        except UnstableCountError:
            left -= edge_shift
            height += edge_shift
            continue
        n = w / (2 * math.pi)
        if abs(n - round(n)) > 0.1:
            left -= edge_shift
            height += edge_shift
            continue
        return int(round(n)), w, left, height
    raise UnstableCountError(f"box count for {chi.label} did not stabilise")


def _em_kwargs(T: float, em_scale: int) -> dict:
    if em_scale == 1:
        return {}
    return {"cutoff": em_scale * max(20, int(math.ceil(2 * (T + 1)))), "terms": 12 * em_scale}


def rotated_completed_l(t, chi: DirichletCharacter, **kw) -> np.ndarray:
    """W^{-1/2} Lambda(1/2 + it, chi), real-valued for primitive chi."""
    t = np.asarray(t, dtype=float)
    w = root_number(chi)
    vals = completed_l(0.5 + 1j * t, chi, **kw) * np.exp(-0.5j * np.angle(w))
    return vals


def line_zero_count(chi: DirichletCharacter, T: float, *, step: float = 0.05,
                    max_halvings: int = 8, em_scale: int = 1) -> tuple[int, np.ndarray]:
    """Sign changes of the rotated completed L-function on [-T, T].

    The grid is halved until the count is the same twice in a row.  Returns
    the count and approximate zero ordinates (midpoints of sign changes).
    """
    kw = _em_kwargs(T, em_scale)
    history: list[int] = []
    h = step
    zeros = np.zeros(0)
    for _ in range(max_halvings + 1):
        n = int(math.ceil(2 * T / h))
        t = np.linspace(-T, T, n + 1)
        z = rotated_completed_l(t, chi, **kw)
        if np.max(np.abs(z.imag)) > 1e-6 * max(np.max(np.abs(z.real)), 1e-300):
            raise ArithmeticError("rotated completed L-function is not real")
        sgn = np.sign(z.real)
        flips = np.flatnonzero(sgn[:-1] * sgn[1:] < 0)
        exact = np.flatnonzero(sgn == 0)
        count = flips.size + exact.size
        zeros = np.sort(np.concatenate([(t[flips] + t[flips + 1]) / 2, t[exact]]))
        history.append(count)
        if len(history) >= 3 and history[-1] == history[-2] == history[-3]:
            return count, zeros
        h /= 2
    raise UnstableCountError(f"line count for {chi.label} did not stabilise: {history}")


def zero_count(q: ZeroCountQuery, *, step: float = 0.05, em_scale: int = 1) -> ZeroCountResult:
    """N(beta, T, chi) for primitive chi.

    At beta = 1/2 the critical-line sign-change count is computed as a second
    route; disagreement is logged and reported in ``consistent``.
    """
    chi = q.character
    if not chi.is_primitive:
        raise DomainError("zero_count expects a primitive character")
    if chi.modulus > ZERO_COUNT_MAX_MODULUS or q.T > ZERO_COUNT_MAX_HEIGHT:
        raise DomainError(f"zero_count is limited to q <= {ZERO_COUNT_MAX_MODULUS} "
                          f"and T <= {ZERO_COUNT_MAX_HEIGHT}")
    count, w, left, height = box_zero_count(chi, q.beta, q.T, step=step, em_scale=em_scale)
    line = None
    consistent = True
    if q.beta == 0.5:
        line, _ = line_zero_count(chi, q.T, step=step, em_scale=em_scale)
        consistent = line == count
        if not consistent:
            log.warning("zero count mismatch for %s: box %d, line %d", chi.label, count, line)
    return ZeroCountResult(count, line, consistent, w, left, height)
