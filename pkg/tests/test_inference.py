import math
from fractions import Fraction

import numpy as np
import pytest

import oracles
from shuffletest import (BayesFactorReport, ChainConfig, ChiSquareReport,
                         DataSummary, ParameterChain,
                         bayes_factor_from_chains, binomial_point_null_bf,
                         build_table, chi_square_quantile, chi_square_test,
                         exact_log_Z, flat_dirichlet_bf,
                         gamma_poisson_bf_curve, get_statistic,
                         harmonic_mean_marginal, lindley_example, normal_prior,
                         simulation_p_value, statistic_histogram,
                         uniformity_bayes_factor)
from shuffletest.cli import validate_document
from shuffletest.exceptions import NormalizerUnavailableError, ValidationError

FP6 = get_statistic("fixed_points", 6)
PRIOR = normal_prior(0.0, 0.1)


def _chain(samples, seed=0, warnings=()):
    samples = np.asarray(samples, dtype=float).reshape(-1, 1)
    return ParameterChain(samples=samples,
                          accepted=np.ones(len(samples), dtype=np.int64),
                          acceptance_rate=0.5, seed=seed,
                          ess=float(len(samples)), rhat=1.0,
                          proposal_scale=0.3, warnings=tuple(warnings))


# --------------------------------------------------------------------------
# report invariants
# --------------------------------------------------------------------------

def _report(bf, log_bf, posterior):
    return BayesFactorReport(
        bf=bf, log_bf=log_bf, posterior_null=posterior,
        per_chain_bf=(bf,), per_chain_log_bf=(log_bf,), prior_odds=1.0,
        method="m", statistic="fixed_points", prior="p", n_data=5, seeds=(0,))


def test_report_enforces_odds_identity():
    _report(2.0, math.log(2.0), 2.0 / 3.0)  # consistent: fine
    with pytest.raises(ValidationError, match="odds identity"):
        _report(2.0, math.log(2.0), 0.5)
    with pytest.raises(ValidationError, match="inconsistent"):
        _report(2.0, math.log(3.0), 0.75)


def test_report_allows_infinite_bf():
    rep = _report(math.inf, 800.0, 1.0)
    doc = rep.to_json()
    assert doc["bf"] == "+inf" and doc["per_chain_bf"] == ["+inf"]
    validate_document(doc, "bayes_factor_report")


def test_chi_square_report_guards():
    ok = dict(categories=("0", "1+"), observed=(3, 7), expected=(5.0, 5.0),
              statistic=1.6, df=1, p_value=0.2, lump_threshold=1.0,
              model="poisson:1", n_data=10)
    ChiSquareReport(**ok)
    with pytest.raises(ValidationError, match="expected"):
        ChiSquareReport(**{**ok, "expected": (4.0, 5.0)})
    with pytest.raises(ValidationError, match="observed"):
        ChiSquareReport(**{**ok, "observed": (3, 6)})
    with pytest.raises(ValidationError, match="df"):
        ChiSquareReport(**{**ok, "df": 2})


# --------------------------------------------------------------------------
# harmonic-mean marginal likelihood
# --------------------------------------------------------------------------

def test_harmonic_mean_always_warns():
    with pytest.warns(RuntimeWarning, match="harmonic-mean"):
        harmonic_mean_marginal(np.array([[0.0], [0.1]]),
                               DataSummary(N=3, stat_sum=np.array([4.0])),
                               FP6)


def test_harmonic_mean_matches_hand_computation():
    thetas = np.array([[0.0], [0.1], [-0.2], [0.3]])
    S, N = 4.0, 3
    ll = np.array([t * S - N * exact_log_Z(6, t) for t in thetas[:, 0]])
    expected = -(math.log(np.exp(-ll).sum()) - math.log(4))
    ests = -(-ll)  # batches of size 1: each batch estimate is ll itself
    exp_stderr = ests.std(ddof=1) / 2.0
    with pytest.warns(RuntimeWarning):
        got, stderr = harmonic_mean_marginal(
            thetas, DataSummary(N=N, stat_sum=np.array([S])), FP6)
    assert got == pytest.approx(expected, rel=1e-12)
    assert stderr == pytest.approx(exp_stderr, rel=1e-12)


def test_harmonic_mean_empty_chain_and_empty_data():
    with pytest.raises(ValidationError, match="empty chain"):
        harmonic_mean_marginal(np.empty((0, 1)), None, FP6)
    with pytest.warns(RuntimeWarning):
        got, _ = harmonic_mean_marginal(np.array([[0.4], [0.2]]), None, FP6)
    assert got == 0.0  # no data: P(Data | H1) = 1


def test_harmonic_mean_needs_normalizer_for_inexact_statistics():
    ap = get_statistic("adjacent_pairs", 6)
    data = DataSummary(N=5, stat_sum=np.array([3.0]))
    with pytest.raises(NormalizerUnavailableError, match="normalizer"):
        harmonic_mean_marginal(np.array([[0.0], [0.1]]), data, ap)
    table = build_table("adjacent_pairs", 6, theta_range=(-0.5, 0.5),
                        resolution=5, method="importance", M=5000, seed=1)
    with pytest.warns(RuntimeWarning):
        got, _ = harmonic_mean_marginal(np.array([[0.0], [0.1]]), data, ap,
                                        normalizer=table)
    assert math.isfinite(got)


def test_pooled_estimate_near_quadrature_oracle(quad6, toy_data):
    # The harmonic-mean estimator is consistent but biased at finite chain
    # length (~ -0.15 here), so this is a ballpark check: structural mistakes
    # (wrong normalizer, missing factor of N) move log BF by whole units.
    _, summary = toy_data
    rep = uniformity_bayes_factor(summary, FP6, PRIOR,
                                  ChainConfig(steps=2000, burnin=500, seed=7),
                                  n_chains=20)
    oracle = quad6.log_bf(62, 50)
    assert abs(rep.log_bf - oracle) < 0.5
    assert rep.log_bf == np.median(rep.per_chain_log_bf)
    assert rep.method == "exchange+harmonic_mean_median"
    assert rep.n_data == 50 and len(set(rep.seeds)) == 20
    assert rep.diagnostics["rhat"] < 1.05
    assert not rep.diagnostics["approximate_auxiliary"]
    assert any("harmonic-mean" in w for w in rep.warnings)
    validate_document(rep.to_json(), "bayes_factor_report")


def test_raw_and_summarized_data_agree(toy_data):
    X, summary = toy_data
    cfg = ChainConfig(steps=800, burnin=200, seed=3)
    a = uniformity_bayes_factor(X, FP6, PRIOR, cfg, n_chains=4)
    b = uniformity_bayes_factor(summary, FP6, PRIOR, cfg, n_chains=4)
    assert a.log_bf == b.log_bf
    assert a.per_chain_log_bf == b.per_chain_log_bf


def test_uniformity_bayes_factor_requires_data():
    cfg = ChainConfig(steps=100, burnin=10)
    with pytest.raises(ValidationError, match="requires data"):
        uniformity_bayes_factor(None, FP6, PRIOR, cfg)
    with pytest.raises(ValidationError, match="requires data"):
        uniformity_bayes_factor(np.empty((0, 6)), FP6, PRIOR, cfg)
    with pytest.raises(ValidationError, match="requires data"):
        uniformity_bayes_factor(DataSummary(N=0, stat_sum=np.array([0.0])),
                                FP6, PRIOR, cfg)


# --------------------------------------------------------------------------
# pooling mechanics (synthetic chains)
# --------------------------------------------------------------------------

def test_median_pooling_and_per_chain_values():
    data = DataSummary(N=3, stat_sum=np.array([4.0]))
    chains = [_chain([t], seed=i) for i, t in enumerate((0.0, 0.2, 0.5))]
    rep = bayes_factor_from_chains(chains, data, FP6, PRIOR)
    log_p_h0 = -3 * math.log(720)
    expected = [log_p_h0 - (t * 4.0 - 3 * exact_log_Z(6, t))
                for t in (0.0, 0.2, 0.5)]
    assert rep.per_chain_log_bf == pytest.approx(expected, rel=1e-12)
    assert rep.log_bf == float(np.median(expected))
    assert rep.seeds == (0, 1, 2)


def test_overflowing_bayes_factor_becomes_infinite():
    # identity-heavy data under a strongly negative theta: H1's marginal is
    # astronomically small, so log BF >> 700 and bf is reported as +inf
    data = DataSummary(N=1000, stat_sum=np.array([6000.0]))
    rep = bayes_factor_from_chains([_chain([-20.0, -20.0])], data, FP6, PRIOR)
    assert rep.bf == math.inf and rep.posterior_null == 1.0
    assert rep.log_bf > 700 and math.isfinite(rep.log_bf)
    assert rep.per_chain_bf == (math.inf,)
    doc = rep.to_json()
    assert doc["bf"] == "+inf"
    validate_document(doc, "bayes_factor_report")


def test_disagreeing_chains_trigger_rhat_warning():
    rng = np.random.default_rng(4)
    data = DataSummary(N=2, stat_sum=np.array([3.0]))
    chains = [_chain(rng.normal(0.0, 0.1, size=100), seed=0),
              _chain(rng.normal(4.0, 0.1, size=100), seed=1)]
    rep = bayes_factor_from_chains(chains, data, FP6, PRIOR)
    assert rep.diagnostics["rhat"] > 1.1
    assert any("R-hat" in w for w in rep.warnings)


def test_chain_warnings_deduplicated():
    data = DataSummary(N=2, stat_sum=np.array([3.0]))
    chains = [_chain([0.0, 0.1], seed=0, warnings=("custom warning",)),
              _chain([0.05, 0.12], seed=1, warnings=("custom warning",))]
    rep = bayes_factor_from_chains(chains, data, FP6, PRIOR)
    assert sum(w == "custom warning" for w in rep.warnings) == 1


def test_no_chains_rejected():
    with pytest.raises(ValidationError, match="no chains"):
        bayes_factor_from_chains([], None, FP6, PRIOR)


# --------------------------------------------------------------------------
# closed-form conjugate analyses
# --------------------------------------------------------------------------

def test_binomial_bf_matches_exact_fraction():
    for n, j in [(1, 0), (2, 1), (10, 3), (30, 15), (100, 44), (255, 200)]:
        exact = oracles.binomial_bf_fraction(n, j)
        assert binomial_point_null_bf(n, j) == pytest.approx(float(exact),
                                                             rel=1e-12)
    assert binomial_point_null_bf(2, 1) == pytest.approx(1.5, rel=1e-12)


def test_binomial_bf_validation():
    with pytest.raises(ValidationError, match="at most n"):
        binomial_point_null_bf(5, 6)
    with pytest.raises(ValidationError):
        binomial_point_null_bf(0, 0)


def test_lindley_example_pinned_values():
    z, p, posterior = lindley_example(49581, 48870)
    total = 98451
    z_exact = (49581 - total / 2) / math.sqrt(total / 4)
    assert z == pytest.approx(z_exact, rel=1e-15)
    assert z == pytest.approx(2.265998, abs=5e-7)
    assert p == pytest.approx(0.02345150, abs=5e-9)
    bf = oracles.binomial_bf_fraction(total, 49581)
    assert posterior == pytest.approx(float(bf / (1 + bf)), rel=1e-10)
    assert posterior == pytest.approx(0.95052296, abs=5e-9)
    # the tension the example illustrates: frequentist rejection at 5% with
    # strong posterior support for the same null
    assert p < 0.05 and posterior > 0.9


def test_flat_dirichlet_bf_matches_exact_fraction():
    data = [0, 0, 1, 2, 2, 2, 5]
    counts = [2, 1, 3, 1]
    exact = oracles.dirichlet_bf_fraction(6, counts)
    assert flat_dirichlet_bf(6, data) == pytest.approx(float(exact), rel=1e-12)
    assert flat_dirichlet_bf(720, [3, 1, 4, 1, 5]) == pytest.approx(
        float(oracles.dirichlet_bf_fraction(720, [2, 1, 1, 1])), rel=1e-12)


def test_flat_dirichlet_bf_stable_for_astronomical_cell_counts():
    # m = 10! already breaks the naive lgamma(m+N) - lgamma(m) route
    got = flat_dirichlet_bf(3628800, range(100))
    exact = oracles.dirichlet_bf_fraction(3628800, [1] * 100)
    assert got == pytest.approx(float(exact), rel=1e-12)
    assert got == pytest.approx(1.0013650056074561, rel=1e-12)
    # m = 52!: the factor is indistinguishable from 1 for all-distinct data
    assert flat_dirichlet_bf(math.factorial(52), range(1000)) == \
        pytest.approx(1.0, abs=1e-9)


def test_flat_dirichlet_bf_edge_cases():
    assert flat_dirichlet_bf(6, []) == 1.0
    with pytest.raises(ValidationError, match="flat"):
        flat_dirichlet_bf(6, [0, 1], prior="jeffreys")
    with pytest.raises(ValidationError):
        flat_dirichlet_bf(1, [0])


def test_gamma_poisson_curve_matches_quadrature():
    counts = [0, 2, 1, 1, 3, 0, 1]
    grid = [0.25, 1.0, 2.0, 7.5]
    curve = gamma_poisson_bf_curve(counts, grid)
    assert [a for a, _ in curve] == grid
    for alpha, bf in curve:
        quad = oracles.gamma_poisson_bf_quad(counts, alpha)
        assert bf == pytest.approx(quad, rel=1e-7)


def test_gamma_poisson_single_zero_count_pinned():
    [(_, bf)] = gamma_poisson_bf_curve([0], [1.0])
    assert bf == pytest.approx(2.0 / math.e, rel=1e-12)


def test_gamma_poisson_validation():
    with pytest.raises(ValidationError, match="nonnegative integers"):
        gamma_poisson_bf_curve([-1], [1.0])
    with pytest.raises(ValidationError, match="nonnegative integers"):
        gamma_poisson_bf_curve([0.5], [1.0])
    with pytest.raises(ValidationError):
        gamma_poisson_bf_curve([1], [0.0])


# --------------------------------------------------------------------------
# chi-square goodness of fit
# --------------------------------------------------------------------------

def test_chi_square_smoosh_histogram_report():
    from shuffletest import load_smoosh_histogram
    values, counts = load_smoosh_histogram()
    assert list(values) == [0, 1, 2, 3, 4, 5]
    assert list(counts) == [14, 19, 12, 4, 1, 2]
    rep = chi_square_test(counts, "poisson:1")
    assert rep.categories == ("0", "1", "2", "3+")
    assert rep.observed == (14, 19, 12, 7)
    assert rep.statistic == pytest.approx(3.906716, abs=5e-7)
    assert rep.df == 3
    assert rep.p_value == pytest.approx(0.271715, abs=5e-7)
    assert rep.n_data == 52 and rep.model == "poisson:1"
    assert rep.warnings == ()
    validate_document(rep.to_json(), "chi_square_report")


def test_chi_square_statistic_matches_hand_formula():
    observed = np.array([30, 40, 30])
    rep = chi_square_test(observed, [0.25, 0.5, 0.25], lump_threshold=0.0)
    exp = np.array([25.0, 50.0, 25.0])
    assert rep.statistic == pytest.approx(
        float(((observed - exp) ** 2 / exp).sum()), rel=1e-12)
    assert rep.model == "explicit" and rep.df == 2


def test_lumping_stops_at_two_cells():
    # expectations decay so fast every tail cell is below threshold; lumping
    # must still leave two cells
    rep = chi_square_test([5, 3, 2, 1], "poisson:0.001")
    assert len(rep.categories) == 2 and rep.df == 1
    assert rep.categories[-1].endswith("+")


def test_interior_sparse_cell_warns_but_passes():
    rep = chi_square_test([90, 1, 9], [0.9, 0.005, 0.095], lump_threshold=1.0)
    assert len(rep.categories) == 3  # only tail cells are merged
    assert any("interior" in w for w in rep.warnings)


def test_zero_expected_after_lumping_rejected():
    with pytest.raises(ValidationError, match="zero expected"):
        chi_square_test([5, 5, 2], [0.5, 0.5, 0.0], lump_threshold=0.0)


def test_uniform_model_support():
    rep = chi_square_test([10, 12, 8, 30], "uniform:6")
    # cells 0,1,2 have mass 1/6; the open tail 3+ absorbs the rest
    assert rep.expected == pytest.approx((10.0, 10.0, 10.0, 30.0))
    assert rep.model == "uniform:6"
    with pytest.raises(ValidationError, match="smaller"):
        chi_square_test([1, 2, 3, 4], "uniform:3")


def test_explicit_values_must_be_consecutive():
    rep = chi_square_test([10, 12, 8], "uniform:3", values=[2, 3, 4])
    assert rep.categories == ("2", "3", "4+")
    with pytest.raises(ValidationError, match="consecutive"):
        chi_square_test([10, 12, 8], "uniform:5", values=[0, 2, 3])


def test_chi_square_input_validation():
    with pytest.raises(ValidationError, match=">= 2"):
        chi_square_test([5])
    with pytest.raises(ValidationError, match="nonnegative"):
        chi_square_test([5, -1])
    with pytest.raises(ValidationError, match="sum to zero"):
        chi_square_test([0, 0])
    with pytest.raises(ValidationError, match="unknown expected model"):
        chi_square_test([5, 5], "binomial:3")
    with pytest.raises(ValidationError, match="sum to"):
        chi_square_test([5, 5], [0.4, 0.4])
    with pytest.raises(ValidationError, match="lump_threshold"):
        chi_square_test([5, 5], lump_threshold=-1.0)


def test_chi_square_quantile_pinned():
    assert chi_square_quantile(5, 0.05) == pytest.approx(11.0705, abs=5e-5)
    assert chi_square_quantile(1, 0.05) == pytest.approx(3.8415, abs=5e-5)


def test_simulation_p_value_tracks_analytic():
    _, counts = __import__("shuffletest").load_smoosh_histogram()
    rep = chi_square_test(counts, "poisson:1")
    p_sim = simulation_p_value(counts, "poisson:1", n_sims=200_000, seed=0)
    assert abs(p_sim - rep.p_value) < 0.01
    assert p_sim == simulation_p_value(counts, "poisson:1", n_sims=200_000,
                                       seed=0)  # deterministic


def test_statistic_histogram_matches_counter(toy_data):
    X, _ = toy_data
    values, counts = statistic_histogram(X, FP6)
    expected = oracles.value_histogram(6, oracles.fixed_points_slow)
    import collections
    ctr = collections.Counter(int(FP6.evaluate(row[None, :])[0, 0])
                              for row in X)
    assert counts.sum() == 50
    for v, c in zip(values, counts):
        assert ctr.get(int(v), 0) == int(c)
    with pytest.raises(ValidationError, match="1-d"):
        statistic_histogram(X, get_statistic("wash_triple", 6))
