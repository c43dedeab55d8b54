"""Geometric side of the Kuznetsov formula at prime level and the one-level density evaluator.

For prime N and (mn, N) = 1 the geometric side is

    Delta_N(m, n; h) = diagonal + eisenstein + kloosterman

with the diagonal (1/pi^2) int t h(t) tanh(pi t) dt when m = n, the Eisenstein
term -(1/(pi N))(1 + 1/N) int h(t) sigma_{2it}(m) sigma_{2it}(n) / ((mn)^{it}
|zeta_N(1+2it)|^2) dt and the Kloosterman term sum over c = 0 mod N of
S(m,n;c) H+(4 pi sqrt(mn)/c) / c.  At level 1 the single cusp gives the
Eisenstein coefficient -1/pi.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass
from functools import lru_cache

import numpy as np

from .errors import BudgetError, DomainError, InsufficientDataError
from .ntcore import (
    divisors,
    euler_phi,
    is_prime,
    kloosterman,
    kloosterman_char_expansion,
    kloosterman_row,
    primitive_characters,
    prime_powers_up_to,
    sigma_2it,
)
from .specfun import zeta_n
from .transforms import (
    FOUR_PI,
    TestFunction,
    WeightFunction,
    gl_panels,
    hplus_linear_constant,
    hplus_many,
    katz_sarnak_functional,
)

DEFAULT_C_MAX_MULTIPLIER = 40
LEVEL_ONE_C_MAX = 2000
DEFAULT_PAIR_BUDGET = 5_000_000
T_INTEGRAL_TOL = 1e-13
DENSITY_CSV_COLUMNS = ("N", "sigma", "h_id", "phi_id", "c_max", "density_value",
                       "ks_prediction", "deviation", "tail_bound")


def _check_prime_level(N: int) -> None:
    if not is_prime(N):
        raise DomainError(f"level must be prime, got {N}")


# ---------------------------------------------------------------------------
# integrals over the spectral parameter
# ---------------------------------------------------------------------------


def _t_nodes(h: WeightFunction, panels: int) -> tuple[np.ndarray, np.ndarray]:
    # an even number of panels keeps t = 0 off the node set
    L = h.cutoff()
    return gl_panels(-L, L, panels, 16)


def t_integral(h: WeightFunction, g, *, tol: float = T_INTEGRAL_TOL, max_panels: int = 512):
    """int h(t) g(t) dt over R, doubling the panel count until converged.

    ``g`` maps an array of t to an array whose trailing axis is t; several
    integrands can therefore be integrated at once.
    """
    panels = 16
    prev = None
    while panels <= max_panels:
        t, w = _t_nodes(h, panels)
        cur = np.asarray(g(t)) @ (w * h(t).real)
        if prev is not None:
            err = np.max(np.abs(cur - prev))
            if err <= tol * max(1.0, float(np.max(np.abs(cur)))):
                return cur
        prev = cur
        panels *= 2
    raise ArithmeticError("spectral integral did not converge")


@lru_cache(maxsize=32)
def diagonal_integral(h: WeightFunction) -> float:
    """(1/pi^2) int t h(t) tanh(pi t) dt."""
    return float(t_integral(h, lambda t: t * np.tanh(np.pi * t))) / np.pi**2


def _inverse_zeta_sq(t: np.ndarray, N: int) -> np.ndarray:
    z = zeta_n(1 + 2j * t, N) if N > 1 else zeta_n(1 + 2j * t, 1)
    return 1.0 / np.abs(z) ** 2


def eisenstein_coefficient(N: int) -> float:
    return -1 / np.pi if N == 1 else -(1 + 1 / N) / (np.pi * N)


def eisenstein_term(m: int, n: int, N: int, h: WeightFunction) -> float:
    def g(t):
        num = sigma_2it(m, t) * sigma_2it(n, t) * np.exp(-1j * t * math.log(m * n))
        return num.real * _inverse_zeta_sq(t, N)

    return eisenstein_coefficient(N) * float(t_integral(h, g))


def _prime_power_eisenstein(pairs: list[tuple[int, int]], N: int, h: WeightFunction) -> np.ndarray:
    """Eisenstein terms of Delta_N(p^nu, 1) for many prime powers at once."""
    if not pairs:
        return np.zeros(0)
    logp = np.array([math.log(p) for p, _ in pairs])
    nus = np.array([nu for _, nu in pairs])

    def g(t):
        # sigma_{2it}(p^nu) p^{-i nu t} = sum_{j=0..nu} cos((2j - nu) t log p)
        out = np.zeros((len(pairs), t.size))
        for j in range(int(nus.max()) + 1):
            live = nus >= j
            out[live] += np.cos(np.outer((2 * j - nus[live]) * logp[live], t))
        return out * _inverse_zeta_sq(t, N)[None, :]

    return eisenstein_coefficient(N) * t_integral(h, g)


# ---------------------------------------------------------------------------
# geometric side
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GeometricSideReport:
    m: int
    n: int
    level: int
    diagonal: float
    eisenstein: float
    kloosterman: float
    c_max: int
    tail_bound: float
    total: float


def kloosterman_tail_estimate(m: int, n: int, level: int, c_max: int, h: WeightFunction) -> float:
    """Estimate of the discarded tail sum over c > c_max, c = 0 mod level.

    Uses H+(x) <= C_H x and the Weil bound, with the divisor function replaced
    by its mean: sum_{j > J} tau(j) j^{-3/2} <= 2 (log J + 2)/sqrt(J).
    """
    J = max(1, c_max // level)
    g = math.gcd(math.gcd(m, n), level * J) if level > 1 else math.gcd(m, n)
    tau_level = 2 if level > 1 else 1
    weil = tau_level * math.sqrt(g) * level ** -1.5 * 2 * (math.log(J) + 2) / math.sqrt(J)
    return FOUR_PI * hplus_linear_constant(h) * math.sqrt(m * n) * weil


def _kloosterman_side(m: int, n: int, level: int, h: WeightFunction, c_max: int) -> float:
    cs = np.arange(level, c_max + 1, level)
    if cs.size == 0:
        return 0.0
    x = FOUR_PI * math.sqrt(m * n) / cs
    hp = hplus_many(h, x, check_domain=level > 1)
    s = np.array([kloosterman(m, n, int(c)) for c in cs])
    return float(np.sum(s / cs * hp))


def _geometric_side(m: int, n: int, level: int, h: WeightFunction, c_max: int) -> GeometricSideReport:
    if m < 1 or n < 1:
        raise DomainError("m and n must be positive")
    diag = diagonal_integral(h) if m == n else 0.0
    eis = eisenstein_term(m, n, level, h)
    kl = _kloosterman_side(m, n, level, h, c_max)
    tail = kloosterman_tail_estimate(m, n, level, c_max, h)
    return GeometricSideReport(m, n, level, diag, eis, kl, c_max, tail, diag + eis + kl)


def delta_full(m: int, n: int, N: int, h: WeightFunction, c_max: int | None = None) -> GeometricSideReport:
    """Delta_N(m, n; h) with the Kloosterman sum truncated at c_max (default 40 N)."""
    _check_prime_level(N)
    if math.gcd(m * n, N) != 1:
        raise DomainError(f"need gcd(mn, N) = 1, got m={m}, n={n}, N={N}")
    if m * n >= N * N:
        raise DomainError("mn must be below N^2 so that every H+ argument stays below 4 pi")
    c_max = DEFAULT_C_MAX_MULTIPLIER * N if c_max is None else c_max
    if c_max < N:
        raise DomainError("c_max must be at least N")
    return _geometric_side(m, n, N, h, c_max)


@lru_cache(maxsize=64)
def delta_level_one(m: int, n: int, h: WeightFunction, c_max: int = LEVEL_ONE_C_MAX) -> GeometricSideReport:
    """Delta_1(m, n; h): Kloosterman sum over every c >= 1, Eisenstein coefficient -1/pi."""
    return _geometric_side(m, n, 1, h, c_max)


def delta_star(m: int, n: int, N: int, h: WeightFunction, c_max: int | None = None,
               c_max_level_one: int = LEVEL_ONE_C_MAX) -> float:
    """Delta*_N = Delta_N - 2/(N+1) Delta_1, the newform-sifted geometric side."""
    full = delta_full(m, n, N, h, c_max)
    one = delta_level_one(m, n, h, c_max_level_one)
    return full.total - 2 / (N + 1) * one.total


def omega_star(h: WeightFunction, N: int, c_max: int | None = None,
               c_max_level_one: int = LEVEL_ONE_C_MAX) -> tuple[float, float]:
    """(Delta*_N(1, 1; h), (1/pi^2) int h(t) tanh(pi t) t dt)."""
    return delta_star(1, 1, N, h, c_max, c_max_level_one), diagonal_integral(h)


# ---------------------------------------------------------------------------
# explicit formula on the prime side
# ---------------------------------------------------------------------------


def hecke_power(lam_p: float, nu: int, ramified: bool = False) -> float:
    """lambda(p^nu) from lambda(p): the Hecke recurrence, or lambda(p)^nu when p | N."""
    if nu < 0:
        raise DomainError("nu must be >= 0")
    if ramified:
        return lam_p**nu
    prev, cur = 0.0, 1.0
    for _ in range(nu):
        prev, cur = cur, lam_p * cur - prev
    return cur


def prime_sum_terms(phi: TestFunction, X: float, source) -> dict[int, float]:
    """Contributions -2 sum_p lambda(p^nu) p^{-nu/2} phi_hat(nu log p/log X) log p/log X, keyed by nu.

    ``source`` needs ``n_max`` and ``coefficient(n)`` (level 1, so nothing is ramified).
    """
    if X < 2:
        raise DomainError("X must be >= 2")
    logX = math.log(X)
    reach = X**phi.sigma
    if source.n_max < math.ceil(reach) - 1:
        raise InsufficientDataError(
            f"coefficients known up to {source.n_max}, need primes up to {reach:.0f}")
    out: dict[int, float] = {}
    for p, nu in prime_powers_up_to(reach):
        weight = float(phi.hat(nu * math.log(p) / logX))
        if weight == 0.0:
            continue
        lam = source.coefficient(p**nu) if p**nu <= source.n_max else hecke_power(source.coefficient(p), nu)
        out[nu] = out.get(nu, 0.0) - 2 * lam * p ** (-nu / 2) * weight * math.log(p) / logX
    return out


def prime_sum_side(phi: TestFunction, X: float, source) -> float:
    """phi(0)/2 - 2 sum_{p, nu} lambda(p^nu) p^{-nu/2} phi_hat(nu log p/log X) log p/log X."""
    return 0.5 * float(np.real(phi(0.0))) + sum(prime_sum_terms(phi, X, source).values())


# ---------------------------------------------------------------------------
# one-level density
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DensityReport:
    N: int
    sigma: float
    h_id: str
    phi_id: str
    c_max: int
    main_terms: float
    kloosterman_term: float
    eisenstein_term: float
    omega_star: float
    density_value: float
    ks_prediction: float
    deviation: float
    tail_bound: float

    def to_json(self, **extra) -> str:
        return json.dumps({**extra, **asdict(self)}, indent=2, sort_keys=True)

    def csv_row(self) -> dict:
        d = asdict(self)
        return {k: d[k] for k in DENSITY_CSV_COLUMNS}

    def to_csv(self, header: bool = True) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=DENSITY_CSV_COLUMNS, lineterminator="\n")
        if header:
            w.writeheader()
        w.writerow(self.csv_row())
        return buf.getvalue()


def _density_prime_powers(N: int, sigma: float) -> list[tuple[int, int]]:
    return [(p, nu) for p, nu in prime_powers_up_to(N**sigma) if p != N]


def density_geometric(phi: TestFunction, h: WeightFunction, N: int, c_max: int | None = None, *,
                      budget: int = DEFAULT_PAIR_BUDGET) -> DensityReport:
    """One-level density D*(phi, h; N) from the geometric side.

    density = phi_hat(0) + phi(0)/2 - (2/Omega*) sum_{p, nu} p^{-nu/2}
    phi_hat(nu log p/log N) (log p/log N) (Eisenstein + Kloosterman)(p^nu, 1),
    with c running over multiples of N up to c_max.  The Kloosterman rows are
    built by FFT, one per modulus, and summed in ascending c.
    """
    _check_prime_level(N)
    if not 0 < phi.sigma < 2:
        raise DomainError("support radius must lie in (0, 2)")
    c_max = DEFAULT_C_MAX_MULTIPLIER * N if c_max is None else c_max
    if c_max < N:
        raise DomainError("c_max must be at least N")
    pairs = _density_prime_powers(N, phi.sigma)
    cs = np.arange(N, c_max + 1, N)
    if len(pairs) * cs.size > budget:
        raise BudgetError(f"{len(pairs)} prime powers x {cs.size} moduli exceeds budget {budget}")
    logN = math.log(N)
    pp = np.array([p**nu for p, nu in pairs], dtype=np.int64)
    logp = np.array([math.log(p) for p, _ in pairs])
    nus = np.array([nu for _, nu in pairs], dtype=float)
    weights = pp ** -0.5 * np.asarray(phi.hat(nus * logp / logN)) * logp / logN

    omega, _ = omega_star(h, N, c_max)

    x = FOUR_PI * np.sqrt(pp)[None, :] / cs[:, None]
    hp = hplus_many(h, x)
    kl_sum = 0.0
    for i, c in enumerate(cs):
        row = kloosterman_row(int(c), 1)
        kl_sum += float(np.sum(row[pp % c] * hp[i] * weights)) / c

    eis = _prime_power_eisenstein(pairs, N, h)
    eis_sum = float(eis @ weights)

    tails = np.array([kloosterman_tail_estimate(int(m), 1, N, c_max, h) for m in pp])
    tail = 2 / abs(omega) * float(np.abs(weights) @ tails)

    main = katz_sarnak_functional(phi)
    k_term = -2 / omega * kl_sum
    e_term = -2 / omega * eis_sum
    value = main + k_term + e_term
    ks = katz_sarnak_functional(phi)
    return DensityReport(N, phi.sigma, h.h_id, phi.phi_id, int(c_max), main, k_term, e_term,
                         omega, value, ks, abs(value - ks), tail)


def weil_envelope(phi: TestFunction, h: WeightFunction, N: int, c_max: int | None = None) -> float:
    """A-priori cap on the Kloosterman contribution with each S replaced by its Weil bound."""
    c_max = DEFAULT_C_MAX_MULTIPLIER * N if c_max is None else c_max
    pairs = _density_prime_powers(N, phi.sigma)
    logN = math.log(N)
    omega, _ = omega_star(h, N, c_max)
    total = 0.0
    for c in range(N, c_max + 1, N):
        tau = len(divisors(c))
        for p, nu in pairs:
            m = p**nu
            x = FOUR_PI * math.sqrt(m) / c
            w = abs(float(phi.hat(nu * math.log(p) / logN))) * math.log(p) / logN / math.sqrt(m)
            total += tau * math.sqrt(math.gcd(m, c)) * math.sqrt(c) / c * hplus_linear_constant(h) * x * w
    return 2 / abs(omega) * total


# ---------------------------------------------------------------------------
# character form of the error term
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CharacterFormReport:
    N: int
    sigma: float
    c_max: int
    error_expression: float
    reconstruction_difference: float


def _prime_power_terms(phi: TestFunction, h: WeightFunction, N: int, c: int):
    """(n, Lambda(n)-weighted coefficient) for n = p^nu <= N^sigma at modulus c."""
    logN = math.log(N)
    pairs = prime_powers_up_to(N**phi.sigma)
    n = np.array([p**nu for p, nu in pairs], dtype=np.int64)
    logp = np.array([math.log(p) for p, _ in pairs])
    coef = n ** -0.5 * np.asarray(phi.hat(np.log(n) / logN)) * logp / logN
    hp = hplus_many(h, FOUR_PI * np.sqrt(n) / c)
    return pairs, n, coef * hp


def reconstruction_difference(phi: TestFunction, h: WeightFunction, N: int, c: int) -> float:
    """|Kloosterman-form prime term at c minus its Gauss-sum reconstruction|.

    Prime powers sharing a factor with c are taken from the Kloosterman sum on
    both sides, since the character expansion needs (n, c) = 1.
    """
    pairs, n, coef = _prime_power_terms(phi, h, N, c)
    keep = np.array([p != N for p, _ in pairs])
    direct = sum(kloosterman(int(m), 1, c) * w for m, w, k in zip(n, coef, keep) if k)
    expanded = 0.0
    for m, w, k in zip(n, coef, keep):
        if not k:
            continue
        if math.gcd(int(m), c) == 1:
            expanded += kloosterman_char_expansion(int(m), c).real * w
        else:
            expanded += kloosterman(int(m), 1, c) * w
    return abs(direct - expanded) / c


def error_term_character_form(phi: TestFunction, h: WeightFunction, N: int, c_max: int | None = None,
                              *, budget: int = 200_000) -> CharacterFormReport:
    """The character-sum error expression, truncated at c <= c_max (default 4 N) and c < N^2."""
    _check_prime_level(N)
    c_max = 4 * N if c_max is None else c_max
    cs = [c for c in range(N, min(c_max, N * N - 1) + 1, N)]
    if sum(cs) > budget:
        raise BudgetError(f"character count {sum(cs)} exceeds budget {budget}")
    total = 0.0
    for c in cs:
        pairs, n, coef = _prime_power_terms(phi, h, N, c)
        inner = 0.0
        for d in divisors(c):
            if d == 1:
                continue
            for chi in primitive_characters(d):
                inner += d * abs(np.sum(chi.at(n) * coef))
        total += inner / (c * euler_phi(c))
    return CharacterFormReport(N, phi.sigma, int(c_max), total,
                               reconstruction_difference(phi, h, N, N))
