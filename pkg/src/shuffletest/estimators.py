"""Scikit-learn style estimators wrapping the testing pipelines.

Both estimators consume a dataset of permutations shaped (N, n) with 1-based
images (one permutation per row, e.g. from ``sample_dataset`` or
``read_perm_file``) and expose fitted results as trailing-underscore
attributes.
"""

from __future__ import annotations

from sklearn.base import BaseEstimator

from .exceptions import ValidationError
from .expfam import parse_prior
from .inference import chi_square_test, statistic_histogram, uniformity_bayes_factor
from .permutations import get_statistic
from .samplers import ChainConfig
from .validation import check_permutation_array


class UniformityBayesTest(BaseEstimator):
    """Bayesian test that permutations are uniformly distributed.

    Fits the posterior of the tilt parameter theta by replicate
    exchange-algorithm chains, estimates the marginal likelihood of the
    alternative by the harmonic-mean method, and pools per-chain Bayes
    factors by their median.

    Parameters
    ----------
    statistic : str, default="fixed_points"
        Sufficient statistic name (see ``permutations.statistic_names``).
    prior : str, default="normal:0,0.1"
        Prior grammar string: "normal:MU,SIGMA2" (SIGMA2 a variance),
        "conjugate:N0,X0" or "gamma:ALPHA,BETA".
    chains : int, default=20
        Number of replicate chains.
    steps : int, default=1000
        Total Metropolis steps per chain.
    burnin : int, default=200
        Steps discarded from the front of each chain.
    thin : int, default=1
        Keep every thin-th post-burn-in state.
    proposal_scale : float, default=0.2
        Initial random-walk standard deviation (adapted during burn-in only).
    prior_odds : float, default=1.0
        Prior odds P(H0)/P(H1).
    seed : int or None, default=None
        Master seed; chains derive independent streams from it.
    normalizer : NormalizerTable or None
        Required for statistics without exact level counts.

    Attributes
    ----------
    bayes_factor_ : float
        Pooled BF = P(Data|H0)/P(Data|H1); +inf when log BF overflows.
    log_bf_ : float
    posterior_null_ : float
        P(H0 | Data) under ``prior_odds``.
    per_chain_bf_ : tuple of float
    report_ : BayesFactorReport
        Full structured result (serializable via ``to_json``).
    n_features_in_ : int
        Deck size n.

    Examples
    --------
    >>> from shuffletest.permutations import ShuffleScheme, sample_dataset
    >>> X = sample_dataset(ShuffleScheme("random_transpositions", 52, 180), 200, seed=19)
    >>> test = UniformityBayesTest(chains=4, steps=400, burnin=100, seed=0).fit(X)
    >>> test.posterior_null_ > 0.5
    True
    """

    def __init__(self, statistic="fixed_points", prior="normal:0,0.1",
                 chains=20, steps=1000, burnin=200, thin=1,
                 proposal_scale=0.2, prior_odds=1.0, seed=None,
                 normalizer=None):
        self.statistic = statistic
        self.prior = prior
        self.chains = chains
        self.steps = steps
        self.burnin = burnin
        self.thin = thin
        self.proposal_scale = proposal_scale
        self.prior_odds = prior_odds
        self.seed = seed
        self.normalizer = normalizer

    def fit(self, X, y=None):
        """Run the test on a dataset of permutations.

        Parameters
        ----------
        X : array-like of shape (N, n)
            1-based permutation rows.
        y : ignored
        """
        X = check_permutation_array(X)
        n = X.shape[1]
        stat = get_statistic(self.statistic, n)
        prior = parse_prior(self.prior, stat)
        config = ChainConfig(steps=self.steps, burnin=self.burnin,
                             proposal_scale=self.proposal_scale,
                             seed=0 if self.seed is None else self.seed,
                             thin=self.thin)
        report = uniformity_bayes_factor(
            X, stat, prior, config, n_chains=self.chains,
            prior_odds=self.prior_odds, normalizer=self.normalizer)
        self.report_ = report
        self.bayes_factor_ = report.bf
        self.log_bf_ = report.log_bf
        self.posterior_null_ = report.posterior_null
        self.per_chain_bf_ = report.per_chain_bf
        self.diagnostics_ = report.diagnostics
        self.warnings_ = report.warnings
        self.n_features_in_ = n
        return self

    def predict(self, X=None, threshold=0.5):
        """Decision: 1 if the fitted posterior favors uniformity (H0)."""
        if not hasattr(self, "posterior_null_"):
            raise ValidationError("call fit before predict")
        return int(self.posterior_null_ >= threshold)


class ChiSquareUniformityTest(BaseEstimator):
    """Frequentist goodness-of-fit counterpart of UniformityBayesTest.

    Reduces each permutation to a 1-d statistic, histograms the values and
    compares them to the statistic's law under perfect uniformity (the
    fixed-point count of a uniform permutation is nearly Poisson(1)).

    Parameters
    ----------
    statistic : str, default="fixed_points"
    model : str, default="poisson:1"
        Expected model over statistic values: "poisson:LAMBDA",
        "uniform[:SIZE]" or explicit probabilities.
    lump_threshold : float, default=1.0
        Tail categories with expected counts below this are merged.

    Attributes
    ----------
    statistic_ : float
        Pearson chi-square statistic after lumping.
    p_value_ : float
    df_ : int
    report_ : ChiSquareReport
    """

    def __init__(self, statistic="fixed_points", model="poisson:1",
                 lump_threshold=1.0):
        self.statistic = statistic
        self.model = model
        self.lump_threshold = lump_threshold

    def fit(self, X, y=None):
        X = check_permutation_array(X)
        n = X.shape[1]
        stat = get_statistic(self.statistic, n)
        values, counts = statistic_histogram(X, stat)
        report = chi_square_test(counts, self.model,
                                 lump_threshold=self.lump_threshold,
                                 values=values)
        self.report_ = report
        self.statistic_ = report.statistic
        self.p_value_ = report.p_value
        self.df_ = report.df
        self.n_features_in_ = n
        return self

    def predict(self, X=None, alpha=0.05):
        """Decision: 1 if uniformity is NOT rejected at level alpha."""
        if not hasattr(self, "p_value_"):
            raise ValidationError("call fit before predict")
        return int(self.p_value_ >= alpha)
