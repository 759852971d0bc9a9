"""Independent reference implementations the tests check the library against.

Everything here is written the slow, obvious way on purpose -- exhaustive
enumeration of S_n, dense 1-d quadrature, exact rational arithmetic -- with
no imports from the package under test except where a test explicitly wants
to drive library code (the detailed-balance kernel check).  Agreement between
these and the fast library paths is what the test suite is built on.
"""

import itertools
import math
from collections import Counter
from fractions import Fraction

import numpy as np
from scipy.special import logsumexp


# --------------------------------------------------------------------------
# exhaustive enumeration of S_n (1-based image tuples)
# --------------------------------------------------------------------------

def all_permutations(n):
    return list(itertools.permutations(range(1, n + 1)))


def fixed_points_slow(perm):
    return sum(1 for i, v in enumerate(perm, start=1) if v == i)


def adjacent_pairs_slow(perm):
    return sum(1 for a, b in zip(perm, perm[1:]) if b == a + 1)


def position_of_card_slow(perm, card):
    return perm.index(card) + 1


def wash_triple_slow(perm):
    n = len(perm)
    return (adjacent_pairs_slow(perm), position_of_card_slow(perm, 1),
            position_of_card_slow(perm, n))


def value_histogram(n, evaluator):
    """Counter mapping statistic value -> #permutations, by enumeration."""
    return Counter(evaluator(p) for p in all_permutations(n))


def derangements_slow(n):
    # inclusion-exclusion: D_n = n! sum_{k=0}^n (-1)^k / k!, exact integers
    return sum((-1) ** k * math.factorial(n) // math.factorial(k)
               for k in range(n + 1))


def log_Z_slow(n, theta):
    """log sum_sigma exp(theta * F(sigma)) by brute force, shifted fsum."""
    vals = [theta * fixed_points_slow(p) for p in all_permutations(n)]
    m = max(vals)
    return m + math.log(math.fsum(math.exp(v - m) for v in vals))


def pmf_slow(n, theta):
    """P_theta(F = j) for the fixed-point statistic, by enumeration."""
    log_z = log_Z_slow(n, theta)
    out = {}
    for j, count in value_histogram(n, fixed_points_slow).items():
        out[j] = count * math.exp(theta * j - log_z)
    return out


def moments_slow(n, theta):
    """(mean, variance) of F under P_theta, by enumeration."""
    pmf = pmf_slow(n, theta)
    mean = sum(j * p for j, p in pmf.items())
    var = sum((j - mean) ** 2 * p for j, p in pmf.items())
    return mean, var


# --------------------------------------------------------------------------
# random-transposition walk as explicit matrix powers (independent of the
# library's level-set convolution)
# --------------------------------------------------------------------------

def walk_distribution_matrix(n, k):
    """Distribution over S_n (lexicographic order) after k steps from id.

    One step: pick L, R uniformly from {1..n} independently and swap the
    cards at positions L and R (L = R allowed, so the walk holds with
    probability 1/n).
    """
    perms = all_permutations(n)
    index = {p: i for i, p in enumerate(perms)}
    size = len(perms)
    T = np.zeros((size, size))
    for i, p in enumerate(perms):
        for l in range(n):
            for r in range(n):
                q = list(p)
                q[l], q[r] = q[r], q[l]
                T[i, index[tuple(q)]] += 1.0 / n ** 2
    dist = np.zeros(size)
    dist[index[tuple(range(1, n + 1))]] = 1.0
    for _ in range(k):
        dist = dist @ T
    return dist, perms


def tv_slow(p, q):
    return 0.5 * float(np.abs(np.asarray(p) - np.asarray(q)).sum())


# --------------------------------------------------------------------------
# 1-d quadrature for the fixed-point model with a normal prior
# --------------------------------------------------------------------------

class PosteriorQuadrature:
    """Dense-grid quadrature oracle for theta | data on the F statistic.

    Model: P_theta(sigma) = exp(theta F(sigma) - m(theta)) on S_n, data are
    N i.i.d. draws with statistic sum S, prior theta ~ Normal(mu, v).  The
    grid spans +/- span prior standard deviations, which contains all the
    posterior mass whenever the prior does (the posterior only shrinks the
    normal tails further).
    """

    def __init__(self, n, mu=0.0, v=0.1, span=8.0, points=8001):
        self.n, self.mu, self.v = n, mu, v
        counts = self._fp_counts(n)
        with np.errstate(divide="ignore"):
            self.logc = np.log(counts)
        self.j = np.arange(n + 1, dtype=float)
        self.log_nf = math.lgamma(n + 1)
        sd = math.sqrt(v)
        self.grid = np.linspace(mu - span * sd, mu + span * sd, points)
        self.log_dw = np.log(np.gradient(self.grid))
        self.log_prior = (-0.5 * (self.grid - mu) ** 2 / v
                          - 0.5 * math.log(2 * math.pi * v))
        self.m_grid = self.m(self.grid)

    @staticmethod
    def _fp_counts(n):
        D = [1, 0]
        for m_ in range(2, n + 1):
            D.append((m_ - 1) * (D[m_ - 1] + D[m_ - 2]))
        return np.array([math.comb(n, j) * D[n - j] for j in range(n + 1)],
                        dtype=float)

    def m(self, thetas):
        t = np.atleast_1d(np.asarray(thetas, dtype=float))
        return logsumexp(t[:, None] * self.j[None, :] + self.logc[None, :],
                         axis=1)

    def level_probs(self, theta):
        lw = self.logc + theta * self.j
        lw -= lw.max()
        w = np.exp(lw)
        w[np.isneginf(lw)] = 0.0
        return w / w.sum()

    def log_evidence_h1(self, S, N):
        """log P(Data | H1) = log integral of the likelihood over the prior."""
        return float(logsumexp(self.grid * S - N * self.m_grid
                               + self.log_prior + self.log_dw))

    def log_bf(self, S, N):
        """log [P(Data | H0) / P(Data | H1)], H0 the uniform law."""
        return -N * self.log_nf - self.log_evidence_h1(S, N)

    def posterior_logpdf_grid(self, S, N):
        lp = self.grid * S - N * self.m_grid + self.log_prior
        return lp - logsumexp(lp + self.log_dw)

    def posterior_mean_sd(self, S, N):
        pdf = np.exp(self.posterior_logpdf_grid(S, N))
        mean = np.trapezoid(self.grid * pdf, self.grid)
        var = np.trapezoid((self.grid - mean) ** 2 * pdf, self.grid)
        return float(mean), math.sqrt(float(var))

    def posterior_bin_masses(self, S, N, bins):
        pdf = np.exp(self.posterior_logpdf_grid(S, N))
        cdf = np.concatenate(
            [[0.0], np.cumsum(0.5 * (pdf[1:] + pdf[:-1]) * np.diff(self.grid))])
        cdf /= cdf[-1]
        return np.diff(np.interp(bins, self.grid, cdf))

    def prior_mean_of_gradient(self, n0, x0, points=40001, lo=-80.0, hi=40.0):
        """E[grad m(theta)] under the conjugate prior, by quadrature."""
        grid = np.linspace(lo, hi, points)
        m_g = self.m(grid)
        lp = n0 * x0 * grid - n0 * m_g
        lp -= logsumexp(lp + np.log(np.gradient(grid)))
        # grad m by center differences on the same grid
        grad = np.gradient(m_g, grid)
        return float(np.trapezoid(grad * np.exp(lp), grid))


# --------------------------------------------------------------------------
# closed-form Bayes factors in exact rational arithmetic
# --------------------------------------------------------------------------

def binomial_bf_fraction(n, j):
    return Fraction((n + 1) * math.comb(n, j), 2 ** n)


def dirichlet_bf_fraction(m, counts):
    """BF for m equiprobable cells vs a flat Dirichlet, exact rational."""
    N = sum(counts)
    num = 1
    for t in range(N):
        num *= m + t
    den = m ** N
    for c in counts:
        den *= math.factorial(c)
    return Fraction(num, den)


def gamma_poisson_bf_quad(counts, alpha):
    """BF for Poisson(1) vs Poisson(lambda), lambda ~ Gamma(alpha, alpha),
    by adaptive quadrature over lambda (factorials cancel)."""
    from scipy.integrate import quad
    from scipy.stats import gamma as gamma_dist

    counts = np.asarray(counts)
    N, S = len(counts), int(counts.sum())

    def integrand(lam):
        return math.exp(-N * lam + S * math.log(lam)) * \
            gamma_dist.pdf(lam, alpha, scale=1.0 / alpha)

    evidence_h1, _ = quad(integrand, 0, np.inf, limit=200)
    evidence_h0 = math.exp(-N)
    return evidence_h0 / evidence_h1


# --------------------------------------------------------------------------
# detailed-balance kernel check for the exchange move
# --------------------------------------------------------------------------

def detailed_balance_worst(quad, S, N, prior, *, n_grid=41, span=5.0,
                           offsets=(1, 2), trials=10 ** 5, seed=3):
    """Worst |pi_i K_ij - pi_j K_ji| / (4 SE) over a theta grid.

    Discretizes theta to a grid around the quadrature posterior, uses the
    symmetric proposal q(+/-off) = 1/(2 * len(offsets)), and estimates each
    directed kernel entry by Monte Carlo over the auxiliary draw: K_ij =
    q_ij E_w[min(1, a)], with the acceptance ratio computed by the library
    (shuffletest.samplers.exchange_log_ratio) and w the exact N-fold
    level-multinomial at theta_j.  Returns the worst standardized
    discrepancy; detailed balance holds iff it stays below 1.
    """
    from shuffletest.samplers import exchange_log_ratio

    rng = np.random.default_rng(seed)
    mean, sd = quad.posterior_mean_sd(S, N)
    grid = np.linspace(mean - span * sd, mean + span * sd, n_grid)
    lp = quad.posterior_logpdf_grid(S, N)
    log_pi = np.interp(grid, quad.grid, lp)
    log_pi -= logsumexp(log_pi)
    pi = np.exp(log_pi)
    level_p = [quad.level_probs(t) for t in grid]
    q = 1.0 / (2 * len(offsets))

    def kernel_entry(a, b):
        # w ~ P_{theta_b}^N; acceptance averaged over the auxiliary draw
        counts = rng.multinomial(N, level_p[b], size=trials)
        S_w = counts @ quad.j
        base = exchange_log_ratio(grid[a], grid[b], 0.0, 0.0, prior)
        log_a = base + (grid[b] - grid[a]) * (S - S_w)
        acc = np.minimum(1.0, np.exp(np.minimum(log_a, 0.0)))
        return q * acc.mean(), q * acc.std() / math.sqrt(trials)

    worst = 0.0
    for i in range(n_grid):
        for off in offsets:
            jdx = i + off
            if jdx >= n_grid:
                continue
            kij, sij = kernel_entry(i, jdx)
            kji, sji = kernel_entry(jdx, i)
            gap = abs(pi[i] * kij - pi[jdx] * kji)
            se = math.sqrt((pi[i] * sij) ** 2 + (pi[jdx] * sji) ** 2)
            worst = max(worst, gap / (4.0 * se + 1e-300))
    return worst
