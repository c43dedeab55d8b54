"""Exact arithmetic: sieved tables, Dirichlet characters, Gauss and Kloosterman sums.

Character labels are exponent vectors on a fixed generator set: for each odd
prime power the smallest primitive root, for 2^k >= 8 the pair (-1, 5), for
4 the single generator -1.  Phases are kept as integer numerators over the
group exponent so that character values never accumulate rounding error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache, reduce
from typing import Iterator, Sequence

import numpy as np

from .errors import BudgetError, DomainError

# Bytes per sieved integer across all tables (five 8-byte arrays plus scratch).
_BYTES_PER_ENTRY = 48
DEFAULT_MEMORY_BUDGET = 4 * 2**30

DIRECT_KLOOSTERMAN_LIMIT = 10**4
REALITY_TOL = 1e-10


# ---------------------------------------------------------------------------
# elementary helpers
# ---------------------------------------------------------------------------


def factorize(n: int) -> dict[int, int]:
    """Prime factorisation by trial division (n up to ~1e12 is instant)."""
    if n < 1:
        raise DomainError(f"cannot factor {n}")
    out: dict[int, int] = {}
    for p in (2, 3):
        while n % p == 0:
            out[p] = out.get(p, 0) + 1
            n //= p
    p = 5
    step = 2
    while p * p <= n:
        while n % p == 0:
            out[p] = out.get(p, 0) + 1
            n //= p
        p += step
        step = 6 - step
    if n > 1:
        out[n] = out.get(n, 0) + 1
    return out


def is_prime(n: int) -> bool:
    if n < 2:
        return False
    return factorize(n) == {n: 1}


def divisors(n: int) -> list[int]:
    divs = [1]
    for p, k in factorize(n).items():
        divs = [d * p**j for d in divs for j in range(k + 1)]
    return sorted(divs)


def euler_phi(n: int) -> int:
    out = n
    for p in factorize(n):
        out -= out // p
    return out


def moebius(n: int) -> int:
    f = factorize(n)
    if any(k > 1 for k in f.values()):
        return 0
    return -1 if len(f) % 2 else 1


def primes_up_to(x: float) -> np.ndarray:
    x = int(x)
    if x < 2:
        return np.zeros(0, dtype=np.int64)
    flags = np.ones(x + 1, dtype=bool)
    flags[:2] = False
    for p in range(2, math.isqrt(x) + 1):
        if flags[p]:
            flags[p * p :: p] = False
    return np.flatnonzero(flags).astype(np.int64)


def prime_powers_up_to(x: float) -> list[tuple[int, int]]:
    """All (p, nu) with p^nu <= x, nu >= 1, ordered by nu then p."""
    primes = primes_up_to(x)
    out = []
    nu = 1
    while primes.size and 2**nu <= x:
        for p in primes:
            p = int(p)
            if p**nu > x:
                break
            out.append((p, nu))
        nu += 1
    return out


def mod_inverse_array(x: np.ndarray, c: int) -> np.ndarray:
    """Inverses of an array of units mod c by a vectorised extended Euclid."""
    x = np.asarray(x, dtype=np.int64) % c
    if c == 1:
        return np.zeros_like(x)
    r0 = np.full_like(x, c)
    r1 = x.copy()
    s0 = np.zeros_like(x)
    s1 = np.ones_like(x)
    active = r1 != 0
    while active.any():
        q = np.zeros_like(x)
        q[active] = r0[active] // r1[active]
        r0, r1 = np.where(active, r1, r0), np.where(active, r0 - q * r1, r1)
        s0, s1 = np.where(active, s1, s0), np.where(active, s0 - q * s1, s1)
        active = r1 != 0
    if np.any(r0 != 1):
        raise DomainError("mod_inverse_array received a non-unit")
    return s0 % c


def unit_residues(c: int) -> np.ndarray:
    x = np.arange(c, dtype=np.int64)
    if c == 1:
        return np.zeros(1, dtype=np.int64)
    return x[np.gcd(x, c) == 1]


def expfrac(a, c: int) -> np.ndarray:
    """e(a/c) with the numerator reduced mod c before division."""
    a = np.mod(np.asarray(a, dtype=np.int64), c)
    return np.exp(2j * np.pi * (a / c))


# ---------------------------------------------------------------------------
# sieve tables
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ArithTables:
    """Read-only arrays indexed by n = 0..limit (index 0 is padding)."""

    limit: int
    mangoldt: np.ndarray
    moebius: np.ndarray
    totient: np.ndarray
    divisor_count: np.ndarray
    primes: np.ndarray


def sieve_arith(X: int, memory_budget: int = DEFAULT_MEMORY_BUDGET) -> ArithTables:
    """Sieve Lambda, mu, phi and tau up to X."""
    if X < 1 or X > 10**8:
        raise DomainError(f"sieve limit must lie in [1, 1e8], got {X}")
    if (X + 1) * _BYTES_PER_ENTRY > memory_budget:
        raise BudgetError(f"sieve up to {X} exceeds memory budget {memory_budget} bytes")

    mu = np.ones(X + 1, dtype=np.int64)
    phi = np.arange(X + 1, dtype=np.int64)
    tau = np.ones(X + 1, dtype=np.int64)
    lam = np.zeros(X + 1, dtype=np.float64)
    mu[0] = tau[0] = 0
    primes = primes_up_to(X)
    for p in primes.tolist():
        mu[p::p] *= -1
        phi[p::p] -= phi[p::p] // p
        logp = math.log(p)
        pk, k = p, 1
        while pk <= X:
            lam[pk] = logp
            # positions divisible by p^k carry factor k from the previous pass
            tau[pk::pk] = tau[pk::pk] // k * (k + 1)
            if k == 2:
                mu[pk::pk] = 0
            if pk > X // p:
                break
            pk *= p
            k += 1
    for arr in (mu, phi, tau, lam, primes):
        arr.flags.writeable = False
    return ArithTables(limit=X, mangoldt=lam, moebius=mu, totient=phi,
                       divisor_count=tau, primes=primes)


# ---------------------------------------------------------------------------
# Dirichlet characters
# ---------------------------------------------------------------------------


def _smallest_primitive_root(pk: int, p: int) -> int:
    order = euler_phi(pk)
    qs = list(factorize(order))
    for g in range(2, pk):
        if g % p == 0:
            continue
        if all(pow(g, order // r, pk) != 1 for r in qs):
            return g
    raise DomainError(f"no primitive root mod {pk}")


@dataclass(frozen=True)
class _Component:
    """One cyclic factor of (Z/q)^*: discrete logs of every residue mod q."""

    prime: int
    order: int
    logs: np.ndarray  # length q, -1 on non-units
    local_conductor: tuple[int, ...]  # conductor exponent for each exponent value


def _v(p: int, a: int) -> int:
    k = 0
    while a and a % p == 0:
        a //= p
        k += 1
    return k


@lru_cache(maxsize=256)
def _components(q: int) -> tuple[_Component, ...]:
    res = np.arange(q, dtype=np.int64)
    comps: list[_Component] = []
    for p, k in sorted(factorize(q).items()) if q > 1 else []:
        pk = p**k
        local = res % pk
        if p == 2:
            if k == 1:
                continue
            # generator -1 of order 2; exponent a gives conductor 4 unless trivial
            minus = np.full(q, -1, dtype=np.int64)
            odd = local % 2 == 1
            minus[odd] = np.where(local[odd] % 4 == 1, 0, 1)
            comps.append(_Component(2, 2, minus, (0, 2)))
            if k >= 3:
                order = 2 ** (k - 2)
                table = np.full(pk, -1, dtype=np.int64)
                v = 1
                for j in range(order):
                    table[v] = j
                    table[(-v) % pk] = j
                    v = v * 5 % pk
                logs = np.where(odd, table[local], -1)
                cond = tuple(0 if a == 0 else k - _v(2, a) for a in range(order))
                comps.append(_Component(2, order, logs, cond))
            continue
        g = _smallest_primitive_root(pk, p)
        order = pk // p * (p - 1)
        table = np.full(pk, -1, dtype=np.int64)
        v = 1
        for j in range(order):
            table[v] = j
            v = v * g % pk
        logs = table[local]
        cond = tuple(0 if a == 0 else max(1, k - _v(p, a)) for a in range(order))
        comps.append(_Component(p, order, logs, cond))
    return tuple(comps)


@dataclass(frozen=True, eq=False)
class DirichletCharacter:
    """A character mod q.  Values are e(phase[n]/exponent), zero where phase < 0."""

    modulus: int
    index: tuple[int, ...]
    conductor: int
    is_primitive: bool
    is_principal: bool
    exponent: int = field(repr=False)
    phase: np.ndarray = field(repr=False)

    def __call__(self, n: int) -> complex:
        r = int(self.phase[n % self.modulus])
        if r < 0:
            return 0j
        return complex(expfrac(r, self.exponent))

    def values(self) -> np.ndarray:
        """chi(0), ..., chi(q-1) as a complex array."""
        out = np.zeros(self.modulus, dtype=complex)
        mask = self.phase >= 0
        out[mask] = expfrac(self.phase[mask], self.exponent)
        return out

    def at(self, n: np.ndarray) -> np.ndarray:
        return self.values()[np.asarray(n, dtype=np.int64) % self.modulus]

    @property
    def parity(self) -> int:
        """0 for even characters, 1 for odd ones."""
        if self.modulus <= 2:
            return 0
        return 0 if int(self.phase[self.modulus - 1]) == 0 else 1

    @property
    def label(self) -> str:
        return f"{self.modulus}.{'.'.join(map(str, self.index)) or '0'}"

    def conj(self) -> "DirichletCharacter":
        return _make_character(self.modulus, tuple(
            (-a) % c.order for a, c in zip(self.index, _components(self.modulus))))

    def __mul__(self, other: "DirichletCharacter") -> "DirichletCharacter":
        if other.modulus != self.modulus:
            raise DomainError("characters must share a modulus to multiply")
        return _make_character(self.modulus, tuple(
            (a + b) % c.order for a, b, c in
            zip(self.index, other.index, _components(self.modulus))))

    def __eq__(self, other: object) -> bool:
        return (isinstance(other, DirichletCharacter)
                and other.modulus == self.modulus and other.index == self.index)

    def __hash__(self) -> int:
        return hash((self.modulus, self.index))


@lru_cache(maxsize=4096)
def _make_character(q: int, index: tuple[int, ...]) -> DirichletCharacter:
    comps = _components(q)
    exponent = reduce(math.lcm, (c.order for c in comps), 1)
    phase = np.zeros(q, dtype=np.int64)
    unit = np.ones(q, dtype=bool)
    cond = 1
    for a, comp in zip(index, comps):
        unit &= comp.logs >= 0
        phase += a * (exponent // comp.order) * np.where(comp.logs >= 0, comp.logs, 0)
    # the 2-part conductor comes from the (-1, 5) pair jointly
    two_exp = 0
    for a, comp in zip(index, comps):
        f = comp.local_conductor[a]
        if comp.prime == 2:
            two_exp = max(two_exp, f)
        else:
            cond *= comp.prime**f
    cond *= 2**two_exp
    if q == 1:
        unit[:] = True
    phase = np.where(unit, phase % exponent, -1)
    if q > 1:
        phase[np.gcd(np.arange(q), q) != 1] = -1
    phase.flags.writeable = False
    return DirichletCharacter(
        modulus=q, index=index, conductor=cond, is_primitive=cond == q,
        is_principal=all(a == 0 for a in index), exponent=exponent, phase=phase)


def character_group(q: int) -> list[DirichletCharacter]:
    """All phi(q) characters mod q in lexicographic exponent-vector order."""
    if q < 1:
        raise DomainError(f"modulus must be >= 1, got {q}")
    if q > 10**6:
        raise BudgetError(f"character group mod {q} is beyond the supported range")
    comps = _components(q)
    return [_make_character(q, idx) for idx in _index_vectors([c.order for c in comps])]


def _index_vectors(orders: Sequence[int]) -> Iterator[tuple[int, ...]]:
    if not orders:
        yield ()
        return
    for head in range(orders[0]):
        for tail in _index_vectors(orders[1:]):
            yield (head, *tail)


def primitive_characters(q: int) -> list[DirichletCharacter]:
    return [chi for chi in character_group(q) if chi.is_primitive]


def principal_character(q: int) -> DirichletCharacter:
    return _make_character(q, tuple(0 for _ in _components(q)))


def induce_primitive(chi: DirichletCharacter) -> DirichletCharacter:
    """The primitive character mod conductor(chi) that induces chi."""
    f = chi.conductor
    if f == chi.modulus:
        return chi
    vals = chi.values()
    for cand in character_group(f):
        cv = cand.values()
        n = np.arange(chi.modulus)
        mask = np.gcd(n, chi.modulus) == 1
        if np.allclose(cv[n[mask] % f], vals[mask], atol=1e-9):
            return cand
    raise DomainError(f"no inducing character found for {chi.label}")


def primitive_character_matrix(q: int) -> np.ndarray:
    """Rows chi(0..q-1) for the primitive characters mod q (shape (k, q))."""
    chars = primitive_characters(q)
    if not chars:
        return np.zeros((0, q), dtype=complex)
    return np.stack([c.values() for c in chars])


def gauss_sum(chi: DirichletCharacter) -> complex:
    q = chi.modulus
    return complex(np.sum(chi.values() * expfrac(np.arange(q), q)))


def ramanujan_sum(q: int, n: int) -> int:
    """c_q(n), the Gauss sum of the principal character twisted by n."""
    return sum(moebius(q // d) * d for d in divisors(math.gcd(q, n)))


# ---------------------------------------------------------------------------
# Kloosterman sums
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class KloostermanQuery:
    m: int
    n: int
    c: int

    def __post_init__(self):
        if self.c < 1:
            raise DomainError(f"Kloosterman modulus must be >= 1, got {self.c}")


def _kloosterman_direct(m: int, n: int, c: int) -> complex:
    if c == 1:
        return 1.0 + 0j
    x = unit_residues(c)
    xbar = mod_inverse_array(x, c)
    num = (m % c) * x + (n % c) * xbar
    return complex(np.sum(expfrac(num, c)))


def _kloosterman_multiplicative(m: int, n: int, c: int) -> complex:
    parts = [p**k for p, k in factorize(c).items()] if c > 1 else [1]
    if len(parts) == 1:
        return _kloosterman_direct(m, n, c)
    # S(m,n;qr) = S(m r', n r'; q) S(m q', n q'; r) with r r' = 1 (q), q q' = 1 (r)
    q = parts[0]
    r = c // q
    rbar = pow(r, -1, q)
    qbar = pow(q, -1, r)
    return (_kloosterman_direct(m * rbar, n * rbar, q)
            * _kloosterman_multiplicative(m * qbar, n * qbar, r))


def kloosterman(q: KloostermanQuery | int, n: int | None = None, c: int | None = None,
                method: str = "auto") -> float:
    """S(m, n; c) as a real number.

    ``method`` is ``"direct"``, ``"multiplicative"`` or ``"auto"`` (direct up to
    c = 1e4, coprime-factor recombination above).
    """
    if not isinstance(q, KloostermanQuery):
        q = KloostermanQuery(int(q), int(n), int(c))
    if method == "auto":
        method = "direct" if q.c <= DIRECT_KLOOSTERMAN_LIMIT else "multiplicative"
    if method == "direct":
        val = _kloosterman_direct(q.m, q.n, q.c)
    elif method == "multiplicative":
        val = _kloosterman_multiplicative(q.m, q.n, q.c)
    else:
        raise DomainError(f"unknown Kloosterman method {method!r}")
    if abs(val.imag) > REALITY_TOL * max(1.0, math.sqrt(q.c)):
        raise ArithmeticError(f"Kloosterman sum {q} has imaginary part {val.imag}")
    return val.real


def kloosterman_row(c: int, n: int = 1) -> np.ndarray:
    """S(m, n; c) for every m = 0..c-1 from a single length-c FFT."""
    if c < 1:
        raise DomainError(f"Kloosterman modulus must be >= 1, got {c}")
    if c == 1:
        return np.ones(1)
    a = np.zeros(c, dtype=complex)
    x = unit_residues(c)
    a[x] = expfrac((n % c) * mod_inverse_array(x, c), c)
    return (np.fft.ifft(a) * c).real


def kloosterman_char_expansion(n: int, c: int) -> complex:
    """(1/phi(c)) sum over all chi mod c of conj(chi(n)) tau(chi)^2, principal included."""
    if c < 2:
        raise DomainError("character expansion needs c >= 2")
    if math.gcd(n, c) != 1:
        raise DomainError(f"gcd({n}, {c}) > 1")
    total = 0j
    for chi in character_group(c):
        total += np.conj(chi(n)) * gauss_sum(chi) ** 2
    return total / euler_phi(c)


def sigma_2it(n: int, t):
    """Sum over d | n of d^{2it}; vectorised in t."""
    if n < 1:
        raise DomainError(f"sigma_2it needs n >= 1, got {n}")
    logs = np.log(np.array(divisors(n), dtype=float))
    t = np.asarray(t, dtype=float)
    out = np.exp(2j * np.multiply.outer(t, logs)).sum(axis=-1)
    return complex(out) if out.ndim == 0 else out
