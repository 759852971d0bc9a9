"""Exact combinatorics for small decks: derangements, fixed-point level
counts, closed-form normalizers, and brute-force walk distributions."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .exceptions import ValidationError
from .validation import check_count

_EXACT_WALK_MAX_N = 7  # n! memory: 7! = 5040 states is the practical limit


def derangements(m: int) -> int:
    """D_m = permutations of m items with no fixed point (exact integer)."""
    m = check_count(m, "m", minimum=0)
    # D_0 = 1, D_1 = 0, D_m = (m-1)(D_{m-1} + D_{m-2})
    if m == 0:
        return 1
    prev2, prev1 = 1, 0
    for j in range(2, m + 1):
        prev2, prev1 = prev1, (j - 1) * (prev1 + prev2)
    return prev1


def fixed_point_counts(n: int) -> list[int]:
    """c_n(j) = #{sigma in S_n : F(sigma) = j} = C(n,j) * D_{n-j}, j = 0..n.

    c_n(n-1) = 0: no permutation fixes exactly n-1 points.
    """
    n = check_count(n, "n", minimum=1)
    return [math.comb(n, j) * derangements(n - j) for j in range(n + 1)]


@dataclass(frozen=True)
class FixedPointCounts:
    """Level-set sizes of the fixed-point statistic on S_n."""

    n: int
    counts: tuple

    @classmethod
    def build(cls, n: int) -> "FixedPointCounts":
        return cls(n, tuple(fixed_point_counts(n)))

    @property
    def values(self) -> np.ndarray:
        return np.arange(self.n + 1)

    def log_counts(self) -> np.ndarray:
        with np.errstate(divide="ignore"):  # c_n(n-1) = 0 -> -inf
            return np.log(np.array(self.counts, dtype=float))

    def total(self) -> int:
        return math.factorial(self.n)


def _log_Z_level_sets(n: int, theta: float) -> float:
    # log Z = logsumexp_j (theta*j + log c_n(j))
    lc = FixedPointCounts.build(n).log_counts()
    j = np.arange(n + 1)
    terms = theta * j + lc
    hi = terms.max()
    return float(hi + np.log(np.exp(terms - hi).sum()))

def _log_Z_closed_form(n: int, theta: float) -> float:
    # Z(theta) = n! * sum_{j=0}^{n} u^j / j!  with u = e^theta - 1
    # (truncated exponential series; exact because tail coefficients vanish)
    u = math.expm1(theta)
    if theta >= 0:
        s = math.fsum(u ** j / math.factorial(j) for j in range(n + 1))
        return math.lgamma(n + 1) + math.log(s)
    # u in (-1, 0): alternating series, fsum keeps full precision
    s = math.fsum(u ** j / math.factorial(j) for j in range(n + 1))
    if s <= 0.0:  # cannot happen (Z > 0) unless precision is lost
        raise ArithmeticError(f"normalizer series collapsed at n={n}, theta={theta}")
    return math.lgamma(n + 1) + math.log(s)


def exact_log_Z(n: int, theta: float) -> float:
    """log Z(theta) for the fixed-point family on S_n, exact for any n.

    Evaluated two independent ways (level-set sum and truncated exponential
    series) which must agree to 1e-9 relative; disagreement means a bug.
    """
    n = check_count(n, "n", minimum=1)
    theta = float(theta)
    a = _log_Z_level_sets(n, theta)
    b = _log_Z_closed_form(n, theta)
    if abs(a - b) > 1e-9 * max(1.0, abs(a)):
        raise ArithmeticError(
            f"normalizer routes disagree at n={n}, theta={theta}: {a} vs {b}")
    return a


def exact_fixed_point_pmf(n: int, theta: float) -> np.ndarray:
    """P(F = j | theta) over j = 0..n under the tilted family."""
    lz = exact_log_Z(n, theta)
    lc = FixedPointCounts.build(n).log_counts()
    return np.exp(theta * np.arange(n + 1) + lc - lz)


def poisson_pmf(j, lam: float = 1.0) -> np.ndarray:
    """Poisson(lam) mass at integer points j (the n -> inf law of F)."""
    j = np.asarray(j, dtype=float)
    from scipy.special import gammaln
    return np.exp(j * np.log(lam) - lam - gammaln(j + 1))


# --------------------------------------------------------------------------
# exact distribution of the transposition walk
# --------------------------------------------------------------------------

def _enumerate_sn(n: int) -> tuple[list[tuple], dict]:
    perms = sorted(itertools.permutations(range(1, n + 1)))
    index = {p: i for i, p in enumerate(perms)}
    return perms, index


def _transposition_maps(n: int) -> tuple[list[tuple], np.ndarray]:
    """Index maps sigma -> sigma with positions (a, b) swapped, a < b."""
    perms, index = _enumerate_sn(n)
    pairs = [(a, b) for a in range(n) for b in range(a + 1, n)]
    maps = np.empty((len(pairs), len(perms)), dtype=np.int64)
    for t, (a, b) in enumerate(pairs):
        for i, p in enumerate(perms):
            q = list(p)
            q[a], q[b] = q[b], q[a]
            maps[t, i] = index[tuple(q)]
    return perms, maps


def exact_walk_distribution(n: int, k: int) -> tuple[list[tuple], np.ndarray]:
    """Distribution over S_n after k random-transposition steps from Id.

    One step: pick L, R uniform in 1..n and swap those positions; L = R
    happens with probability 1/n and leaves the state alone, otherwise each
    unordered transposition has mass 2/n^2.  Exact by convolution over the
    full group, so only small n are allowed.
    """
    n = check_count(n, "n", minimum=1)
    k = check_count(k, "k", minimum=0)
    if n > _EXACT_WALK_MAX_N:
        raise ValidationError(
            f"exact walk distribution supports n <= {_EXACT_WALK_MAX_N}, got {n}")
    perms, maps = _transposition_maps(n)
    size = len(perms)
    dist = np.zeros(size)
    dist[0] = 1.0  # identity is lexicographically first
    hold = 1.0 / n          # P(L = R)
    move = 2.0 / n ** 2     # per unordered transposition
    for _ in range(k):
        nxt = hold * dist
        for t in range(maps.shape[0]):
            nxt += move * dist[maps[t]]
        dist = nxt
    return perms, dist


def uniform_distribution(n: int) -> np.ndarray:
    size = math.factorial(n)
    return np.full(size, 1.0 / size)


def total_variation(p, q) -> float:
    """TV(p, q) = (1/2) sum |p - q| for distributions on a common support."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise ValidationError("total_variation requires equal-length vectors")
    return 0.5 * float(np.abs(p - q).sum())


def walk_tv_to_uniform(n: int, k: int) -> float:
    """TV distance between the k-step transposition walk and uniform on S_n."""
    _, dist = exact_walk_distribution(n, k)
    return total_variation(dist, uniform_distribution(n))
