"""Dirichlet-polynomial machinery: Heath-Brown decomposition, dyadic blocks, splitting witnesses,
large sieve, fourth moment, zero-density bookkeeping.

Splitting witnesses work in exponent space: a size N_j is stored as
a_j = log N_j / log N, products become sums and every threshold is linear.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

from .errors import BudgetError, DomainError, NoWitnessError
from .ntcore import (
    character_group,
    induce_primitive,
    primitive_character_matrix,
    primitive_characters,
    primes_up_to,
    sieve_arith,
)
from .specfun import ZeroCountQuery, zero_count
from .transforms import gl_panels

VARIABLES = 40
PADDING_SIZE = 0.5
KINDS = ("one", "moebius", "log")
MAASS_SUPPORT = 15 / 8


# ---------------------------------------------------------------------------
# Heath-Brown identity
# ---------------------------------------------------------------------------


def _divisor_sum(f: np.ndarray, primes: np.ndarray) -> np.ndarray:
    """(1 * f)(n) for n < len(f), one prime at a time.

    For each p the map multiplies the Dirichlet series by 1/(1 - p^{-s}),
    realised as the product of (1 + p^{-2^i s}) over the p-power shifts.
    """
    out = f.copy()
    n = len(f) - 1
    for p in primes.tolist():
        q = p
        while q <= n:
            out[q::q] += out[1:n // q + 1].copy()
            if q > n // q:
                break
            q *= q
    return out


def _mu_z_convolve(f: np.ndarray, mu_small: Sequence[tuple[int, int]]) -> np.ndarray:
    """(mu_z * f) where mu_z is mu restricted to d <= z."""
    n = len(f) - 1
    out = np.zeros_like(f)
    for d, m in mu_small:
        out[d::d] += m * f[1:n // d + 1]
    return out


def heath_brown_expansion(n_max: int, z: int, K: int) -> np.ndarray:
    """sum_j (-1)^{j-1} C(K, j) (log * 1^{*(j-1)} * mu_z^{*j})(n) for n = 0..n_max.

    The arithmetic factor g = sum_j (-1)^{j-1} C(K,j) 1^{*(j-1)} * mu_z^{*j} is
    built in exact int64 arithmetic by Horner's rule in e = 1 * mu_z; a float
    copy runs alongside to detect overflow.  The log factor is applied last as
    Lambda * (1 * g), since log = 1 * Lambda.
    """
    primes = primes_up_to(n_max)
    mu = sieve_arith(max(z, 1)).moebius
    mu_small = [(d, int(mu[d])) for d in range(1, z + 1) if mu[d] != 0]
    delta = np.zeros(n_max + 1, dtype=np.int64)
    delta[1] = 1

    def e_conv(f):
        return _divisor_sum(_mu_z_convolve(f, mu_small), primes)

    acc = delta * ((-1) ** (K - 1) * math.comb(K, K))
    acc_f = acc.astype(float)
    for j in range(K - 1, 0, -1):
        c = (-1) ** (j - 1) * math.comb(K, j)
        acc = e_conv(acc) + c * delta
        acc_f = e_conv(acc_f) + c * delta
        if np.any(np.abs(acc - acc_f) > 1e-6 * np.abs(acc_f) + 1e-6):
            raise BudgetError("Heath-Brown coefficients overflow int64")
    g = _mu_z_convolve(acc, mu_small)
    h = _divisor_sum(g, primes)  # 1 * g, exact integers
    out = np.zeros(n_max + 1)
    hf = h.astype(float)
    for p in primes.tolist():
        logp = math.log(p)
        q = p
        while q <= n_max:
            out[q::q] += logp * hf[1:n_max // q + 1]
            if q > n_max // p:
                break
            q *= p
    return out


def heath_brown_check(n_max: int, z: int, K: int) -> float:
    """max over n <= n_max of |Heath-Brown expansion(n) - Lambda(n)|; requires n_max <= z^K."""
    if z < 1 or K < 1:
        raise DomainError("z and K must be positive")
    if n_max > z**K:
        raise DomainError(f"n_max = {n_max} exceeds z^K = {z**K}")
    if n_max > 10**6 + 2**20:
        raise DomainError("n_max is limited to about 1e6")
    if n_max < 1:
        return 0.0
    lam = sieve_arith(n_max).mangoldt
    exp = heath_brown_expansion(n_max, z, K)
    return float(np.max(np.abs(exp[1:] - lam[1:])))


# ---------------------------------------------------------------------------
# dyadic blocks
# ---------------------------------------------------------------------------


def dyadic_decompose(lo: float, hi: float) -> list[float]:
    """Left ends N of blocks (N, 2N] covering the integers in (lo, hi]: N = lo, 2 lo, 4 lo, ..."""
    if lo < 0.5 or hi < lo:
        raise DomainError("need hi >= lo >= 1/2")
    out = []
    N = float(lo)
    while N < hi:
        out.append(N)
        N *= 2
    return out


def dyadic_blocks(ranges: Sequence[tuple[float, float]]) -> list[tuple[float, ...]]:
    """Cartesian product of per-variable dyadic covers."""
    return list(itertools.product(*(dyadic_decompose(lo, hi) for lo, hi in ranges)))


def pad_sizes(sizes: Sequence[float], total: int = VARIABLES) -> tuple[float, ...]:
    """Pad with N_j = 1/2 up to ``total`` variables (only n = 1 lies in (1/2, 1])."""
    if len(sizes) > total:
        raise DomainError(f"at most {total} variables")
    return tuple(sizes) + (PADDING_SIZE,) * (total - len(sizes))


def theta_k(k: int) -> float:
    """2 - 1/(5k - 2), the holomorphic support radius."""
    if k < 2 or k % 2:
        raise DomainError(f"k must be an even integer >= 2, got {k}")
    return 2 - 1 / (5 * k - 2)


@dataclass(frozen=True)
class Thresholds:
    """Exponent thresholds: case A window (lo, hi], case B bound on the remaining product."""

    lo: float
    hi: float
    rest: float
    total: float


def maass_thresholds(eps: float) -> Thresholds:
    return Thresholds(3 / 4 + eps / 100, 9 / 8 - eps / 100, 9 / 8 - eps / 100, MAASS_SUPPORT - eps)


def holomorphic_thresholds(eps: float, k: int) -> Thresholds:
    th = theta_k(k)
    lo = k * th - 2 * k + 1 + eps / 100
    return Thresholds(lo, th - lo, lo, th - eps)


@dataclass(frozen=True)
class DyadicTuple:
    """40 dyadic sizes with coefficient kinds; ``k`` is None in Maass mode."""

    sizes: tuple[float, ...]
    kinds: tuple[str, ...]
    epsilon: float
    N: float
    k: int | None = None
    exponents: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if len(self.sizes) != VARIABLES or len(self.kinds) != VARIABLES:
            raise DomainError(f"need exactly {VARIABLES} sizes and kinds")
        if self.N < 2 or self.epsilon <= 0:
            raise DomainError("need N >= 2 and epsilon > 0")
        if any(s < 0.5 for s in self.sizes):
            raise DomainError("sizes must be >= 1/2")
        if any(kd not in KINDS for kd in self.kinds):
            raise DomainError(f"kinds must come from {KINDS}")
        a = np.log(np.array(self.sizes)) / math.log(self.N)
        object.__setattr__(self, "exponents", a)
        if a.sum() > self.thresholds.total + 1e-12:
            raise DomainError("product of sizes exceeds the admissible bound")
        big = a > 0.1
        if any(kd == "moebius" for kd, b in zip(self.kinds, big) if b):
            raise DomainError("Moebius coefficients only allowed for N_j <= N^{1/10}")

    @property
    def thresholds(self) -> Thresholds:
        if self.k is None:
            return maass_thresholds(self.epsilon)
        return holomorphic_thresholds(self.epsilon, self.k)

    @classmethod
    def from_exponents(cls, exponents: Sequence[float], epsilon: float, N: float,
                       k: int | None = None, kinds: Sequence[str] | None = None) -> "DyadicTuple":
        sizes = pad_sizes([N**e for e in exponents])
        exps = list(exponents) + [None] * (VARIABLES - len(exponents))
        if kinds is None:
            kinds = ["one" if e is None or e > 0.1 else "moebius" for e in exps]
        else:
            kinds = list(kinds) + ["one"] * (VARIABLES - len(kinds))
        return cls(tuple(sizes), tuple(kinds), epsilon, N, k)


@dataclass(frozen=True)
class SplitWitness:
    """Case "A" carries subset_I; case "B" carries pair.  Indices are 1-based."""

    case: str
    subset_I: tuple[int, ...] = ()
    pair: tuple[int, int] | None = None


def validate_witness(exponents: np.ndarray, w: SplitWitness, th: Thresholds, tol: float = 1e-12) -> bool:
    a = np.asarray(exponents, dtype=float)
    if w.case == "A":
        if not w.subset_I:
            return False
        s = a[[i - 1 for i in w.subset_I]].sum()
        return th.lo < s <= th.hi + tol
    if w.case == "B":
        if w.pair is None or w.pair[0] == w.pair[1]:
            return False
        return a.sum() - a[w.pair[0] - 1] - a[w.pair[1] - 1] <= th.rest + tol
    return False


def greedy_witness(exponents: Sequence[float], th: Thresholds) -> SplitWitness:
    """Witness from the maximal-cardinality construction.

    I collects the smallest exponents while their sum stays <= lo; this has
    maximal cardinality among sets with sum <= lo.  If some j outside I
    brings the sum into (lo, hi] the result is case A (members of I with
    exponent zero are then dropped);
    otherwise at most two indices lie outside I and case B holds.
    """
    true = np.asarray(exponents, dtype=float)
    if true.size < 2:
        raise DomainError("need at least two variables")
    # sizes below 1 (the 1/2 padding) are treated as 1: case B only gets easier and
    # case A sets are pruned of them below, so validation against the true sizes holds
    a = np.maximum(true, 0.0)
    order = np.argsort(a, kind="stable")
    csum = np.cumsum(a[order])
    size = int(np.sum(csum <= th.lo))  # longest prefix with sum <= lo
    I = list(order[:size])
    J = list(order[size:])
    P = float(csum[size - 1]) if size else 0.0
    for j in J:
        if th.lo < P + a[j] <= th.hi:
            chosen = I + [j]
            total = P + a[j]
            for i in sorted(I, key=lambda i: a[i]):
                if a[i] == 0:
                    chosen.remove(i)
                    total -= a[i]
            w = SplitWitness("A", tuple(sorted(int(i) + 1 for i in chosen)))
            break
    else:
        if len(J) > 2:
            raise NoWitnessError(f"no witness for exponents {a[a > 0].tolist()}")
        pair = [int(j) for j in J]
        for i in order[::-1]:
            if len(pair) == 2:
                break
            if int(i) not in pair:
                pair.append(int(i))
        w = SplitWitness("B", pair=tuple(sorted(p + 1 for p in pair)))
    if not validate_witness(true, w, th):
        raise NoWitnessError(f"constructed witness {w} fails validation")
    return w


def splitting_witness(t: DyadicTuple) -> SplitWitness:
    """Witness for the Maass splitting lemma."""
    if t.k is not None:
        raise DomainError("tuple is in holomorphic mode; use splitting_witness_holo")
    return greedy_witness(t.exponents, maass_thresholds(t.epsilon))


def splitting_witness_holo(t: DyadicTuple, k: int) -> SplitWitness:
    """Witness for the weight-k splitting lemma."""
    th = holomorphic_thresholds(t.epsilon, k)
    if t.exponents.sum() > th.total + 1e-12:
        raise DomainError("product of sizes exceeds N^{Theta_k - eps}")
    return greedy_witness(t.exponents, th)


def greedy_witness_batch(a: np.ndarray, th: Thresholds) -> np.ndarray:
    """Vectorised greedy construction on rows of ``a``; returns 0 (failure), 1 (case A), 2 (case B).

    Each row's witness is also re-validated in the same pass, so a return of 1
    or 2 means the witness meets the thresholds.
    """
    a = np.sort(np.maximum(np.asarray(a, dtype=float), 0.0), axis=1)
    csum = np.cumsum(a, axis=1)
    size = np.sum(csum <= th.lo, axis=1)
    # sorted rows make each prefix the cheapest set of its size
    P = np.where(size > 0, np.take_along_axis(csum, np.maximum(size - 1, 0)[:, None], 1)[:, 0], 0.0)
    idx = np.arange(a.shape[1])[None, :]
    outside = idx >= size[:, None]
    cand = P[:, None] + a
    case_a = np.any(outside & (cand > th.lo) & (cand <= th.hi), axis=1)
    n_out = a.shape[1] - size
    rest = csum[:, -1] - a[:, -1] - a[:, -2]
    case_b = (n_out <= 2) & (rest <= th.rest + 1e-12)
    return np.where(case_a, 1, np.where(case_b, 2, 0))


def witness_exists(exponents: Sequence[float], th: Thresholds) -> bool:
    """Exhaustive oracle over subsets of the nonzero exponents."""
    a = np.asarray(exponents, dtype=float)
    nz = a[a != 0]
    total = a.sum()
    top = np.sort(a)[-2:].sum() if a.size >= 2 else total
    if total - top <= th.rest:
        return True
    for r in range(1, nz.size + 1):
        for sub in itertools.combinations(nz.tolist(), r):
            s = sum(sub)
            if th.lo < s <= th.hi:
                return True
    return False


def witness_exists_batch(a: np.ndarray, th: Thresholds) -> np.ndarray:
    """Vectorised exhaustive oracle for rows with few columns (all subsets enumerated)."""
    a = np.asarray(a, dtype=float)
    m = a.shape[1]
    masks = np.array(list(itertools.product((0, 1), repeat=m))[1:], dtype=float)
    sums = a @ masks.T
    ok_a = np.any((sums > th.lo) & (sums <= th.hi), axis=1)
    srt = np.sort(a, axis=1)
    rest = srt.sum(axis=1) - srt[:, -1] - srt[:, -2]
    return ok_a | (rest <= th.rest)


def grid_family(grid: int, max_active: int, total: float) -> np.ndarray:
    """All nondecreasing exponent vectors with entries in (1/grid) Z_{>0}, at most max_active of them
    nonzero, summing to at most ``total``; zero-padded to max_active columns."""
    cap = int(math.floor(total * grid + 1e-9))
    rows: list[tuple[int, ...]] = []

    def rec(prefix: list[int], start: int, remaining: int):
        rows.append(tuple(prefix))
        if len(prefix) == max_active:
            return
        for v in range(start, remaining + 1):
            prefix.append(v)
            rec(prefix, v, remaining - v)
            prefix.pop()

    rec([], 1, cap)
    out = np.zeros((len(rows), max_active))
    for i, r in enumerate(rows):
        out[i, max_active - len(r):] = r
    return out / grid


def random_admissible(count: int, eps: float, rng: np.random.Generator, grid: int = 200,
                      total: float = MAASS_SUPPORT) -> np.ndarray:
    """Random 40-variable exponent tuples on a 1/grid lattice with sum <= total - eps."""
    cap = int(math.floor((total - eps) * grid))
    out = np.zeros((count, VARIABLES))
    active = rng.integers(1, VARIABLES + 1, count)
    budget = rng.integers(0, cap + 1, count)
    for i in range(count):
        m = int(active[i])
        cuts = np.sort(rng.integers(0, budget[i] + 1, m - 1))
        parts = np.diff(np.concatenate([[0], cuts, [budget[i]]]))
        out[i, :m] = rng.permutation(parts)
    return out / grid


# ---------------------------------------------------------------------------
# large sieve and moments
# ---------------------------------------------------------------------------


@lru_cache(maxsize=512)
def _primitive_matrix(d: int) -> np.ndarray:
    m = primitive_character_matrix(d)
    m.setflags(write=False)
    return m


def large_sieve_check(d: int, X: int, a: np.ndarray) -> tuple[float, float]:
    """(sum over primitive chi mod d of |sum_{n<=X} chi(n) a(n)|^2, (d + X) sum |a(n)|^2).

    ``a`` holds a(1..X).
    """
    if d < 2 or X < 1:
        raise DomainError("need d >= 2 and X >= 1")
    a = np.asarray(a, dtype=complex)
    if a.shape != (X,):
        raise DomainError(f"coefficient vector must have length X = {X}")
    n = np.arange(1, X + 1)
    chi = _primitive_matrix(d)
    lhs = float(np.sum(np.abs(chi[:, n % d] @ a) ** 2))
    rhs = (d + X) * float(np.sum(np.abs(a) ** 2))
    return lhs, rhs


def _moment_nodes(t_max: float, step: float) -> tuple[np.ndarray, np.ndarray, float]:
    """Nodes and weights for int f(t) dt/(t^2+1): Gauss-Legendre in t on [-t_max, t_max],
    in theta = arctan t beyond.  Returns (t, w, tail measure beyond t_max)."""
    panels = max(2, int(math.ceil(2 * t_max / step)))
    t, w = gl_panels(-t_max, t_max, panels, 16)
    w = w / (1 + t**2)
    th0 = math.atan(t_max)
    th, wt = gl_panels(th0, math.pi / 2, 8, 16)
    t = np.concatenate([-np.tan(th)[::-1], t, np.tan(th)])
    w = np.concatenate([wt[::-1], w, wt])
    return t, w, math.pi - 2 * th0


def _residue_sums(coef: np.ndarray, n: np.ndarray, d: int, t: np.ndarray) -> np.ndarray:
    """S[r, t] = sum_{n = r mod d} coef(n) n^{-1/2-it}, chunked over t."""
    out = np.zeros((d, t.size), dtype=complex)
    res = n % d
    order = np.argsort(res, kind="stable")
    res_sorted = res[order]
    starts = np.flatnonzero(np.r_[True, np.diff(res_sorted) != 0])
    base = (coef * n ** -0.5)[order]
    logn = np.log(n)[order]
    chunk = max(1, 2_000_000 // max(1, n.size))
    for i in range(0, t.size, chunk):
        tt = t[i:i + chunk]
        vals = base[:, None] * np.exp(-1j * np.outer(logn, tt))
        out[res_sorted[starts], i:i + chunk] = np.add.reduceat(vals, starts, axis=0)
    return out


def _coefficients(kind: str, n: np.ndarray) -> np.ndarray:
    if kind == "one":
        return np.ones(n.size)
    if kind == "log":
        return np.log(n.astype(float))
    if kind == "moebius":
        mu = sieve_arith(int(n.max())).moebius
        return mu[n].astype(float)
    raise DomainError(f"unknown coefficient kind {kind!r}")


@dataclass(frozen=True)
class MomentResult:
    lhs: float
    ratio: float
    tail: float
    t_max: float
    step: float
    method: str = "quadrature"


EXACT_MOMENT_MAX_X = 1000


def _fourth_moment_exact(d: int, X: int, coef: np.ndarray) -> float:
    """Closed form of the fourth moment.

    |sum a(n) chi(n) n^{-1/2-it}|^2 = sum_m A(m) m^{-it} with A(m) = chi(m) m^{-1/2} (a*a)(m),
    and int (m'/m)^{it} dt/(t^2+1) = pi min(m, m')/max(m, m'), so the integral is a
    quadratic form in A evaluated with prefix sums in O(X^2) per character.
    """
    M = X * X
    conv = np.zeros(M + 1)
    n = np.arange(1, X + 1)
    for n1 in range(1, X + 1):
        conv[n1 * n] += coef[n1 - 1] * coef
    m = np.flatnonzero(conv)
    c = conv[m] * m ** -0.5
    chi = _primitive_matrix(d)
    total = 0.0
    for row in chi:
        A = row[m % d] * c
        prefix = np.cumsum(A * m) - A * m
        total += float(np.sum(np.abs(A) ** 2)) + 2.0 * float(np.real(np.sum(np.conj(A) / m * prefix)))
    return math.pi * total


def fourth_moment_integral(d: int, X: int, kind: str = "one", t_max: float = 100.0, *,
                           step: float = 0.5, log_power: float = 13.0,
                           method: str = "auto") -> MomentResult:
    """int sum over primitive chi mod d of |sum_{n<=X} a(n) chi(n) n^{-1/2-it}|^4 dt/(t^2+1).

    ``ratio`` is lhs / (d (log dX)^log_power).  ``method`` is "exact" (closed form,
    X <= EXACT_MOMENT_MAX_X), "quadrature", or "auto" (exact when allowed).  For
    quadrature, ``tail`` bounds the part of the integral beyond |t| = t_max by the
    sup envelope times the tail measure; the exact method reports tail 0.
    """
    if not 2 <= d <= 200:
        raise DomainError("d must lie in [2, 200]")
    if not 1 <= X <= 10**4:
        raise BudgetError("X must lie in [1, 1e4]")
    if method not in ("auto", "exact", "quadrature"):
        raise DomainError(f"unknown method {method!r}")
    if method == "exact" and X > EXACT_MOMENT_MAX_X:
        raise BudgetError(f"exact evaluation needs X <= {EXACT_MOMENT_MAX_X}")
    n = np.arange(1, X + 1)
    coef = _coefficients(kind, n)
    if method == "exact" or (method == "auto" and X <= EXACT_MOMENT_MAX_X):
        lhs = _fourth_moment_exact(d, X, coef)
        ratio = lhs / (d * math.log(d * X) ** log_power)
        return MomentResult(lhs, ratio, 0.0, math.inf, 0.0, "exact")
    t, w, tail_measure = _moment_nodes(t_max, step)
    S = _residue_sums(coef, n, d, t)
    chi = _primitive_matrix(d)
    vals = chi @ S
    lhs = float(np.sum(np.abs(vals) ** 4 @ w))
    envelope = chi.shape[0] * float(np.sum(np.abs(coef) * n ** -0.5)) ** 4
    ratio = lhs / (d * math.log(d * X) ** log_power)
    return MomentResult(lhs, ratio, envelope * tail_measure, t_max, step)


def _block_poly(N_j: float, kind: str, d: int, t: np.ndarray) -> np.ndarray:
    """Residue-class sums of sum_{N_j < n <= 2 N_j} a(n) n^{-1/2-it}."""
    lo = math.floor(N_j) + 1
    hi = math.floor(2 * N_j)
    n = np.arange(lo, hi + 1)
    if n.size == 0:
        return np.zeros((d, t.size), dtype=complex)
    return _residue_sums(_coefficients(kind, n), n, d, t)


def _active(t: DyadicTuple) -> list[int]:
    return [j for j, s in enumerate(t.sizes) if s != PADDING_SIZE]


def char_poly_values(t: DyadicTuple, d: int, tt: np.ndarray, subset: Iterable[int] | None = None) -> np.ndarray:
    """Values (chi, t) of the product polynomial over ``subset`` (0-based, default all) at primitive chi mod d."""
    idx = _active(t) if subset is None else [j for j in subset if j in _active(t)]
    chi = _primitive_matrix(d)
    out = np.ones((chi.shape[0], tt.size), dtype=complex)
    for j in idx:
        out *= chi @ _block_poly(t.sizes[j], t.kinds[j], d, tt)
    return out


@dataclass(frozen=True)
class CharPolyResult:
    lhs: float
    rhs_envelope: float
    tail: float
    log_power: float


def char_poly_integral(t: DyadicTuple, d: int, t_max: float = 100.0, *, step: float = 0.5,
                       log_power: float = 4.0) -> CharPolyResult:
    """int sum* |prod_j sum_{n_j ~ N_j} a_j(n_j) chi(n_j) n_j^{-1/2-it}| dt/(t^2+1), desk scale only."""
    act = _active(t)
    if len(act) > 4:
        raise BudgetError("at most 4 active variables")
    if math.prod(2 * t.sizes[j] for j in act) > 1e5:
        raise BudgetError("total polynomial length exceeds 1e5")
    if not 2 <= d <= 200:
        raise DomainError("d must lie in [2, 200]")
    tt, w, tail_measure = _moment_nodes(t_max, step)
    vals = char_poly_values(t, d, tt)
    lhs = float(np.sum(np.abs(vals)) if vals.size == 0 else np.sum(np.abs(vals) @ w))
    N = t.N
    rhs = (N + d) ** 2 / d * N ** (1 / 16) * math.log(d * N) ** log_power
    env = _primitive_matrix(d).shape[0]
    for j in act:
        n = np.arange(math.floor(t.sizes[j]) + 1, math.floor(2 * t.sizes[j]) + 1)
        env *= float(np.sum(np.abs(_coefficients(t.kinds[j], n)) * n ** -0.5)) if n.size else 0.0
    return CharPolyResult(lhs, rhs, env * tail_measure, log_power)


def second_moment(t: DyadicTuple, d: int, subset: Iterable[int], t_max: float = 100.0,
                  step: float = 0.5) -> float:
    """int sum* |prod over subset|^2 dt/(t^2+1), the Cauchy-Schwarz factor."""
    tt, w, _ = _moment_nodes(t_max, step)
    vals = char_poly_values(t, d, tt, subset)
    return float(np.sum(np.abs(vals) ** 2 @ w))


def tailoring_check(N: float, d: float, factor: float = 3.0) -> tuple[float, float]:
    """(factor * (N+d)^2/d * N^{1/16}, d N^{1/16} + d^{1/2} N^{9/16} + N^{17/16})."""
    lhs = factor * (N + d) ** 2 / d * N ** (1 / 16)
    rhs = d * N ** (1 / 16) + math.sqrt(d) * N ** (9 / 16) + N ** (17 / 16)
    return lhs, rhs


# ---------------------------------------------------------------------------
# zero density
# ---------------------------------------------------------------------------


def _product_character_primitive(xi, psi):
    """The primitive character inducing xi * psi (moduli coprime)."""
    k, q = xi.modulus, psi.modulus
    M = k * q
    n = np.arange(M)
    vals = xi.at(n) * psi.at(n)
    for chi in character_group(M):
        if np.allclose(chi.values(), vals, atol=1e-9):
            return induce_primitive(chi)
    raise DomainError("product character not found")


@dataclass(frozen=True)
class GrandDensityResult:
    lhs: int
    rhs: float
    characters: int
    line_counts: int | None


def grand_density_ratio(Q: int, k: int, T: float, beta: float, *, log_power: float = 4.0) -> GrandDensityResult:
    """(sum over q <= Q, (q,k)=1, primitive psi mod q, all xi mod k of N(beta, T, xi psi),
    (kQ^2 T)^{2(1-beta)} (log kQT)^log_power).

    Zeros of an imprimitive L-function in the critical strip are those of its
    inducing primitive character, so each product is counted through that.
    At beta = 1/2 the critical-line sign-change totals are reported too.
    """
    if Q > 30 or k > 10 or T > 30:
        raise BudgetError("grand density check is limited to Q <= 30, k <= 10, T <= 30")
    if Q < 1 or k < 1:
        raise DomainError("Q and k must be positive")
    total = 0
    line_total = 0 if beta == 0.5 else None
    count = 0
    for q in range(1, Q + 1):
        if math.gcd(q, k) != 1:
            continue
        for psi in primitive_characters(q):
            for xi in character_group(k):
                chi = _product_character_primitive(xi, psi)
                res = zero_count(ZeroCountQuery(beta, T, chi))
                total += res.count
                if line_total is not None:
                    line_total += res.line_count
                count += 1
    rhs = (k * Q**2 * T) ** (2 * (1 - beta)) * math.log(k * Q * T) ** log_power
    return GrandDensityResult(total, rhs, count, line_total)
