"""Uniformity tests: Bayes factors via the exchange algorithm plus
harmonic-mean marginal likelihoods, closed-form conjugate Bayes factors, and
the classical chi-square goodness-of-fit test.

Conventions.  The null hypothesis H0 is theta = 0 (exact uniformity), the
alternative H1 is theta != 0 with a prior over theta.  Bayes factors are
reported as BF = P(Data | H0) / P(Data | H1), so small values are evidence
against uniformity and large values support it.  P(Data | H0) = (1/n!)^N is
always computed exactly.  posterior_null = BF * prior_odds / (1 + BF *
prior_odds).  A Bayes factor whose log exceeds 700 is reported as +infinity
(it would overflow a double); this mirrors how such table entries are
usually displayed.
"""

from __future__ import annotations

import hashlib
import json
import math
import warnings as _warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import chdtri, erfc, expit, gammaincc, gammaln, logsumexp

from . import combinatorics
from .exceptions import NormalizerUnavailableError, ValidationError
from .expfam import PriorSpec
from .permutations import DataSummary, StatisticSpec
from .samplers import (ChainConfig, ParameterChain, cross_chain_rhat,
                       replicate_exchange_chains)
from .validation import check_count, check_positive_real

LOG_BF_OVERFLOW = 700.0
REPORT_FORMAT_VERSION = 1

HARMONIC_MEAN_WARNING = (
    "harmonic-mean marginal likelihood estimates can have very high "
    "variance; treat single-chain values with caution")


def _config_sha256(payload: dict) -> str:
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def _bf_json(value: float):
    return "+inf" if math.isinf(value) else value


# --------------------------------------------------------------------------
# reports
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class BayesFactorReport:
    """Pooled Bayes-factor result with per-chain detail and diagnostics.

    bf may be +inf (overflow convention); log_bf is always finite.
    posterior_null always satisfies the odds identity
    posterior_null = bf * prior_odds / (1 + bf * prior_odds).
    """

    bf: float
    log_bf: float
    posterior_null: float
    per_chain_bf: tuple
    per_chain_log_bf: tuple
    prior_odds: float
    method: str
    statistic: str
    prior: str
    n_data: int
    seeds: tuple
    diagnostics: dict = field(default_factory=dict)
    warnings: tuple = ()
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        if math.isfinite(self.bf):
            expected = math.exp(self.log_bf)
            if abs(self.bf - expected) > 1e-9 * max(1.0, expected):
                raise ValidationError("bf inconsistent with exp(log_bf)")
            odds = self.bf * self.prior_odds
            if abs(self.posterior_null - odds / (1.0 + odds)) > 1e-12:
                raise ValidationError(
                    "posterior_null violates the odds identity")

    def to_json(self) -> dict:
        payload = {
            "version": REPORT_FORMAT_VERSION,
            "kind": "bayes_factor_report",
            "bf": _bf_json(self.bf),
            "log_bf": self.log_bf,
            "posterior_null": self.posterior_null,
            "per_chain_bf": [_bf_json(v) for v in self.per_chain_bf],
            "per_chain_log_bf": list(self.per_chain_log_bf),
            "prior_odds": self.prior_odds,
            "method": self.method,
            "statistic": self.statistic,
            "prior": self.prior,
            "n_data": self.n_data,
            "seeds": list(self.seeds),
            "diagnostics": self.diagnostics,
            "warnings": list(self.warnings),
            "config": self.config,
        }
        payload["config_sha256"] = _config_sha256(self.config)
        return payload


@dataclass(frozen=True)
class ChiSquareReport:
    """Goodness-of-fit result after lumping sparse tail categories."""

    categories: tuple
    observed: tuple
    expected: tuple
    statistic: float
    df: int
    p_value: float
    lump_threshold: float
    model: str
    n_data: int
    warnings: tuple = ()

    def __post_init__(self):
        if abs(sum(self.expected) - self.n_data) > 1e-6:
            raise ValidationError("expected counts do not sum to N")
        if sum(self.observed) != self.n_data:
            raise ValidationError("observed counts do not sum to N")
        if self.df != len(self.categories) - 1:
            raise ValidationError("df must equal #categories - 1")

    def to_json(self) -> dict:
        config = {"model": self.model, "lump_threshold": self.lump_threshold}
        return {
            "version": REPORT_FORMAT_VERSION,
            "kind": "chi_square_report",
            "categories": list(self.categories),
            "observed": list(self.observed),
            "expected": list(self.expected),
            "statistic": self.statistic,
            "df": self.df,
            "p_value": self.p_value,
            "lump_threshold": self.lump_threshold,
            "model": self.model,
            "n_data": self.n_data,
            "warnings": list(self.warnings),
            "config": config,
            "config_sha256": _config_sha256(config),
        }


# --------------------------------------------------------------------------
# harmonic-mean marginal likelihood and the uniformity Bayes factor
# --------------------------------------------------------------------------

def _log_Z_vector(thetas: np.ndarray, statistic: StatisticSpec,
                  normalizer=None) -> np.ndarray:
    """m(theta) for a batch of 1-d parameters, exact or table-interpolated."""
    if normalizer is not None:
        return np.array([float(normalizer.log_Z(t)) for t in thetas])
    if statistic.exact_counts and statistic.dimension == 1:
        lc = combinatorics.FixedPointCounts.build(statistic.n).log_counts()
        j = np.arange(statistic.n + 1)
        return logsumexp(thetas[:, :1] * j + lc, axis=1)
    raise NormalizerUnavailableError(
        f"no exact normalizer for statistic {statistic.name!r} and no table "
        "supplied; build one with the normalizer module")


def harmonic_mean_marginal(chain, data, statistic: StatisticSpec,
                           normalizer=None) -> tuple[float, float]:
    """Harmonic-mean estimate of log P(Data | H1) from posterior draws.

    With a posterior sample theta_1..theta_M, the estimator is
    P-hat = [ (1/M) sum_i P(Data | theta_i)^{-1} ]^{-1}, evaluated entirely
    in the log domain.  The standard error comes from batch means over the
    (ordered) chain.  This estimator is known to be unstable -- it can have
    infinite variance -- so a warning is always attached; pooling several
    chains by the median is the recommended use.
    """
    thetas = chain.samples if isinstance(chain, ParameterChain) else \
        np.atleast_2d(np.asarray(chain, dtype=float))
    if thetas.ndim != 2 or thetas.shape[0] == 0:
        raise ValidationError("empty chain")
    M = thetas.shape[0]
    if isinstance(data, DataSummary):
        N = data.N
        S_y = np.atleast_1d(np.asarray(data.stat_sum, dtype=float))
    elif data is None or (hasattr(data, "__len__") and len(data) == 0):
        N, S_y = 0, np.zeros(statistic.dimension)
    else:
        T = statistic.evaluate(data)
        N, S_y = T.shape[0], T.sum(axis=0)
    if N == 0:
        ll = np.zeros(M)
    else:
        m_vals = _log_Z_vector(thetas, statistic, normalizer)
        ll = thetas @ S_y - N * m_vals
    log_marg = -(logsumexp(-ll) - math.log(M))
    n_batches = min(20, M)
    if n_batches >= 2:
        batches = np.array_split(-ll, n_batches)
        ests = np.array([-(logsumexp(b) - math.log(b.size)) for b in batches])
        stderr = float(ests.std(ddof=1) / math.sqrt(n_batches))
    else:
        stderr = float("nan")
    _warnings.warn(HARMONIC_MEAN_WARNING, RuntimeWarning, stacklevel=2)
    return float(log_marg), stderr


def _pooled_report(per_chain_log_bf, prior_odds, method, statistic_name,
                   prior_desc, n_data, seeds, diagnostics, warn, config
                   ) -> BayesFactorReport:
    per_chain_log_bf = [float(v) for v in per_chain_log_bf]
    log_bf = float(np.median(per_chain_log_bf))
    if log_bf > LOG_BF_OVERFLOW:
        bf, posterior = math.inf, 1.0
    else:
        bf = math.exp(log_bf)
        posterior = float(expit(log_bf + math.log(prior_odds)))
    per_bf = tuple(math.inf if v > LOG_BF_OVERFLOW else math.exp(v)
                   for v in per_chain_log_bf)
    return BayesFactorReport(
        bf=bf, log_bf=log_bf, posterior_null=posterior,
        per_chain_bf=per_bf, per_chain_log_bf=tuple(per_chain_log_bf),
        prior_odds=prior_odds, method=method, statistic=statistic_name,
        prior=prior_desc, n_data=n_data, seeds=tuple(seeds),
        diagnostics=diagnostics, warnings=tuple(warn), config=config)


def uniformity_bayes_factor(data, statistic: StatisticSpec, prior: PriorSpec,
                            config: ChainConfig, n_chains: int = 20,
                            prior_odds: float = 1.0, normalizer=None,
                            m_eval=None) -> BayesFactorReport:
    """Test H0: uniform shuffle against H1: tilted alternative.

    Runs n_chains replicate exchange-algorithm chains on the posterior of
    theta, turns each into a harmonic-mean estimate of log P(Data | H1), and
    pools the per-chain Bayes factors by their median (the harmonic-mean
    estimator has heavy right tails, so the median is far more stable than
    the mean).  P(Data | H0) = (1/n!)^N is exact.
    """
    check_count(n_chains, "n_chains", minimum=1)
    prior_odds = check_positive_real(prior_odds, "prior_odds")
    if isinstance(data, DataSummary):
        N = data.N
    elif data is None or (hasattr(data, "__len__") and len(data) == 0):
        raise ValidationError("uniformity_bayes_factor requires data")
    else:
        N = statistic.evaluate(data).shape[0]
    if N == 0:
        raise ValidationError("uniformity_bayes_factor requires data")
    if m_eval is None and prior.kind == "conjugate":
        if statistic.exact_counts:
            m_eval = lambda th: combinatorics.exact_log_Z(statistic.n,
                                                          float(th[0]))
        elif normalizer is not None:
            m_eval = normalizer.log_Z
        else:
            raise NormalizerUnavailableError(
                "conjugate priors need a log-normalizer; supply m_eval or a "
                "normalizer table")
    chains = replicate_exchange_chains(data, statistic, prior, config,
                                       n_chains, m_eval=m_eval)
    run_config = {
        "steps": config.steps, "burnin": config.burnin, "thin": config.thin,
        "proposal_scale": config.proposal_scale, "seed": config.seed,
        "n_chains": n_chains, "prior": prior.describe(),
        "statistic": statistic.name, "n": statistic.n,
        "prior_odds": prior_odds,
    }
    return bayes_factor_from_chains(chains, data, statistic, prior,
                                    prior_odds=prior_odds,
                                    normalizer=normalizer, config=run_config)


def bayes_factor_from_chains(chains, data, statistic: StatisticSpec,
                             prior: PriorSpec, prior_odds: float = 1.0,
                             normalizer=None, config=None
                             ) -> BayesFactorReport:
    """Assemble a BayesFactorReport from already-run posterior chains."""
    if not chains:
        raise ValidationError("no chains supplied")
    if isinstance(data, DataSummary):
        N = data.N
    elif data is None or (hasattr(data, "__len__") and len(data) == 0):
        N = 0
    else:
        N = statistic.evaluate(data).shape[0]
    log_p_h0 = -N * math.lgamma(statistic.n + 1)
    per_log_bf = []
    hm_err = []
    with _warnings.catch_warnings():
        _warnings.simplefilter("ignore", RuntimeWarning)
        for chain in chains:
            log_marg, err = harmonic_mean_marginal(chain, data, statistic,
                                                   normalizer)
            per_log_bf.append(log_p_h0 - log_marg)
            hm_err.append(err)
    warn = [HARMONIC_MEAN_WARNING]
    rhat = cross_chain_rhat(chains) if len(chains) > 1 else chains[0].rhat
    if rhat > 1.1:
        warn.append(f"split-chain R-hat {rhat:.3f} > 1.1; chains may not "
                    "have converged")
    for chain in chains:
        for w in chain.warnings:
            if w not in warn:
                warn.append(w)
    diagnostics = {
        "rhat": rhat,
        "ess_per_chain": [c.ess for c in chains],
        "acceptance_per_chain": [c.acceptance_rate for c in chains],
        "hm_stderr_per_chain": hm_err,
        "approximate_auxiliary": any(c.approximate for c in chains),
    }
    return _pooled_report(per_log_bf, prior_odds,
                          "exchange+harmonic_mean_median", statistic.name,
                          prior.describe(), N, [c.seed for c in chains],
                          diagnostics, warn, config or {})


# --------------------------------------------------------------------------
# closed-form conjugate analyses
# --------------------------------------------------------------------------

def binomial_point_null_bf(n: int, j: int) -> float:
    """Bayes factor for a fair coin: point null theta = 1/2 against the
    uniform (Beta(1,1)) alternative after j heads in n flips.

    The alternative's marginal is exactly 1/(n+1) for every j, so
    BF = (n+1) C(n,j) 2^{-n}, evaluated in the log domain.  Even a
    maximally balanced outcome gives BF that grows like sqrt(n): with a
    diffuse alternative, large samples increasingly favor the point null
    (the Jeffreys-Lindley phenomenon).
    """
    n = check_count(n, "n", minimum=1)
    j = check_count(j, "j", minimum=0)
    if j > n:
        raise ValidationError(f"j must be at most n, got j={j} n={n}")
    log_bf = (math.log(n + 1) + gammaln(n + 1) - gammaln(j + 1)
              - gammaln(n - j + 1) - n * math.log(2.0))
    return float(math.exp(log_bf))


def lindley_example(boys: int, girls: int) -> tuple[float, float, float]:
    """Two views of the same sex-ratio data: a z-test of p = 1/2 and the
    posterior probability of that point null under equal prior odds.

    Returns (z, two-sided p-value, posterior_null).  For large counts the
    two can disagree sharply: the p-value may reject at 0.05 while the
    posterior probability of the null is near 0.95.
    """
    boys = check_count(boys, "boys", minimum=1)
    girls = check_count(girls, "girls", minimum=1)
    total = boys + girls
    z = (boys - total / 2.0) / math.sqrt(total / 4.0)
    p_value = float(erfc(abs(z) / math.sqrt(2.0)))
    bf = binomial_point_null_bf(total, boys)
    posterior_null = bf / (1.0 + bf)
    return float(z), p_value, float(posterior_null)


def flat_dirichlet_bf(cell_count: int, data, prior: str = "flat") -> float:
    """Bayes factor for uniformity on m cells under a flat Dirichlet
    alternative.

    BF = (1/m)^N / [Gamma(m)/Gamma(m+N) * prod_i Gamma(1 + c_i)] with c_i
    the cell counts.  Computed as
    log BF = sum_{j=0}^{N-1} log1p(j/m) - sum_i log(c_i!), which stays
    accurate even when m is astronomically large (m = n! for a deck):
    the naive difference lgamma(m+N) - lgamma(m) loses every significant
    digit once m >> 1e15.  For m >> N^2 the factor is close to 1 -- with
    this alternative the data can hardly distinguish the hypotheses.
    """
    m = check_count(cell_count, "cell_count", minimum=2)
    if prior != "flat":
        raise ValidationError(
            f"prior {prior!r} unsupported: only the flat Dirichlet(1,..,1) "
            "alternative has a stable closed form here; improper priors on "
            "the simplex make the Bayes factor ill-defined")
    data = np.asarray(list(data))
    N = data.shape[0]
    if N == 0:
        return 1.0
    _, counts = np.unique(data, return_counts=True)
    log_bf = (math.fsum(math.log1p(j / m) for j in range(N))
              - float(gammaln(counts + 1.0).sum()))
    return float(math.exp(log_bf))


def gamma_poisson_bf_curve(counts, alpha_grid) -> list[tuple[float, float]]:
    """Bayes factors for H0: Poisson(1) against a Gamma(alpha, alpha) rate
    prior, as a function of alpha.

    With S = sum of counts and N points,
    BF(alpha) = e^{-N} Gamma(alpha) (alpha+N)^{alpha+S}
                / (alpha^alpha Gamma(alpha+S)),
    exact in the log domain.  Gamma(alpha, alpha) has mean 1, so every
    alpha encodes "rate about 1" with different confidence; plotting the
    curve shows how sensitive the conclusion is to that choice.
    """
    counts = np.asarray(list(counts), dtype=float)
    if counts.size and (np.any(counts < 0) or
                        np.any(counts != np.floor(counts))):
        raise ValidationError("counts must be nonnegative integers")
    N = counts.size
    S = float(counts.sum())
    out = []
    for alpha in np.atleast_1d(np.asarray(alpha_grid, dtype=float)):
        a = check_positive_real(float(alpha), "alpha")
        log_bf = (-N + gammaln(a) - a * math.log(a)
                  + (a + S) * math.log(a + N) - gammaln(a + S))
        bf = math.inf if log_bf > LOG_BF_OVERFLOW else float(math.exp(log_bf))
        out.append((a, bf))
    return out


# --------------------------------------------------------------------------
# chi-square goodness of fit
# --------------------------------------------------------------------------

def _model_probabilities(model, n_values: int) -> tuple[np.ndarray, str]:
    """Cell probabilities for integer categories 0..K-1 with an open tail.

    The last category absorbs all mass at or above its value, so the
    probabilities sum to 1 exactly.
    """
    if isinstance(model, str):
        name, _, param = model.partition(":")
        name = name.strip().lower()
        if name == "poisson":
            lam = check_positive_real(float(param) if param else 1.0, "lambda")
            j = np.arange(n_values)
            pmf = np.exp(j * math.log(lam) - lam - gammaln(j + 1.0))
            probs = pmf.copy()
            probs[-1] = max(1.0 - pmf[:-1].sum(), 0.0)  # open tail
            return probs, f"poisson:{lam:g}"
        if name == "uniform":
            size = int(param) if param else n_values
            if size < n_values:
                raise ValidationError(
                    f"uniform support {size} smaller than the {n_values} "
                    "observed categories")
            probs = np.full(n_values, 1.0 / size)
            probs[-1] = 1.0 - (n_values - 1) / size  # open tail
            return probs, f"uniform:{size}"
        raise ValidationError(
            f"unknown expected model {model!r}; use 'poisson:LAMBDA', "
            "'uniform[:SIZE]', or explicit probabilities")
    probs = np.asarray(model, dtype=float)
    if probs.shape != (n_values,) or np.any(probs < 0):
        raise ValidationError("explicit model must give one nonnegative "
                              "probability per category")
    total = probs.sum()
    if abs(total - 1.0) > 1e-9:
        raise ValidationError(f"explicit model probabilities sum to {total}")
    return probs / total, "explicit"


def _lump_tail(observed: np.ndarray, expected: np.ndarray,
               threshold: float) -> tuple[np.ndarray, np.ndarray]:
    """Merge tail categories with expected < threshold into their left
    neighbor."""
    obs = observed.astype(float).copy()
    exp = expected.copy()
    while obs.size > 2 and exp[-1] < threshold:
        obs[-2] += obs[-1]
        exp[-2] += exp[-1]
        obs, exp = obs[:-1], exp[:-1]
    return obs, exp


def chi_square_test(observed, expected_model="poisson:1",
                    lump_threshold: float = 1.0,
                    values=None) -> ChiSquareReport:
    """Pearson chi-square test of observed category counts against a model.

    ``observed`` holds counts for consecutive integer categories (0, 1, ...,
    or ``values`` explicitly); the final category is treated as open
    ("K or more"), which is the natural reading of a histogram's last row.
    Tail categories whose expected count falls below ``lump_threshold`` are
    merged leftwards before the statistic is computed -- sparse cells
    otherwise inflate the statistic far beyond its nominal distribution.
    df = (#categories after lumping) - 1; the p-value comes from the
    regularized incomplete gamma function.
    """
    observed = np.asarray(observed, dtype=np.int64)
    if observed.ndim != 1 or observed.size < 2:
        raise ValidationError("observed must be a 1-d array of >= 2 counts")
    if np.any(observed < 0):
        raise ValidationError("observed counts must be nonnegative")
    N = int(observed.sum())
    if N < 1:
        raise ValidationError("observed counts sum to zero")
    if values is None:
        values = np.arange(observed.size)
    else:
        values = np.asarray(values, dtype=np.int64)
        if values.shape != observed.shape or np.any(np.diff(values) != 1):
            raise ValidationError(
                "values must be consecutive integers matching observed")
    lump_threshold = float(lump_threshold)
    if lump_threshold < 0:
        raise ValidationError("lump_threshold must be nonnegative")
    probs, model_name = _model_probabilities(expected_model, observed.size)
    expected = N * probs
    obs, exp = _lump_tail(observed, expected, lump_threshold)
    if np.any(exp <= 0.0):
        raise ValidationError(
            "a category has zero expected count after lumping; lower the "
            "model's support or raise lump_threshold")
    warn = []
    if np.any(exp[:-1] < lump_threshold):
        warn.append("interior categories below the lump threshold remain; "
                    "only tail categories are merged")
    stat = float(((obs - exp) ** 2 / exp).sum())
    df = obs.size - 1
    p_value = float(gammaincc(df / 2.0, stat / 2.0))
    labels = [str(int(v)) for v in values[:obs.size]]
    labels[-1] = f"{int(values[obs.size - 1])}+"  # tail is always open
    return ChiSquareReport(
        categories=tuple(labels), observed=tuple(int(v) for v in obs),
        expected=tuple(float(v) for v in exp), statistic=stat, df=df,
        p_value=p_value, lump_threshold=lump_threshold, model=model_name,
        n_data=N, warnings=tuple(warn))


def chi_square_quantile(df: int, upper: float) -> float:
    """Upper quantile of the chi-square distribution (e.g. 0.05 point)."""
    return float(chdtri(df, upper))


def simulation_p_value(observed, expected_model="poisson:1",
                       lump_threshold: float = 1.0, n_sims: int = 100_000,
                       seed: int = 0, batch: int = 200_000) -> float:
    """Monte Carlo p-value for the same statistic and lumping convention.

    Draws multinomial datasets from the fitted model, applies the identical
    tail lumping (the merge pattern depends only on expected counts, which
    are fixed), and reports the fraction of simulated statistics at least as
    large as the observed one.
    """
    observed = np.asarray(observed, dtype=np.int64)
    N = int(observed.sum())
    probs, _ = _model_probabilities(expected_model, observed.size)
    expected = N * probs
    obs, exp = _lump_tail(observed, expected, lump_threshold)
    cells = obs.size
    stat_obs = float(((obs - exp) ** 2 / exp).sum())
    # lumped simulation probabilities: tail mass collapses onto the last cell
    p_lumped = np.empty(cells)
    p_lumped[:cells - 1] = probs[:cells - 1]
    p_lumped[-1] = probs[cells - 1:].sum()
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    n_sims = check_count(n_sims, "n_sims", minimum=1)
    hits = 0
    done = 0
    while done < n_sims:
        b = min(batch, n_sims - done)
        draws = rng.multinomial(N, p_lumped, size=b)
        stats = ((draws - exp) ** 2 / exp).sum(axis=1)
        hits += int((stats >= stat_obs - 1e-12).sum())
        done += b
    return hits / n_sims


def statistic_histogram(data, statistic: StatisticSpec) -> tuple[np.ndarray, np.ndarray]:
    """Histogram of integer statistic values over a dataset: (values, counts)
    for 0..max observed."""
    vals = statistic.evaluate(data)
    if statistic.dimension != 1:
        raise ValidationError("histograms require a 1-d statistic")
    ints = vals[:, 0]
    if np.any(ints < 0) or np.any(ints != np.floor(ints)):
        raise ValidationError("statistic values must be nonnegative integers")
    counts = np.bincount(ints.astype(np.int64))
    return np.arange(counts.size), counts
