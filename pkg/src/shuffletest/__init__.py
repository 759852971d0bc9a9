"""Statistical tests of whether a mixing scheme (card shuffle, lottery
machine, random number generator) produces uniformly distributed outcomes.

The package models departures from uniformity with exponential families on
the symmetric group, handles their intractable normalizers with the exchange
algorithm and two normalizer-estimation routes, and reports Bayes factors
alongside classical chi-square tests.  Small decks admit exact combinatorial
answers, which back every approximate method here as oracles.
"""

from .combinatorics import (derangements, exact_log_Z, exact_walk_distribution,
                            fixed_point_counts, total_variation,
                            walk_tv_to_uniform)
from .estimators import ChiSquareUniformityTest, UniformityBayesTest
from .exceptions import (DegenerateWeightsError, DiagnosticError,
                         NormalizerUnavailableError, OutOfRangeError,
                         ShuffleTestError, ValidationError)
from .expfam import (ExpFamilyModel, PriorSpec, conjugate_posterior_update,
                     conjugate_prior, gamma_prior, make_model, normal_prior,
                     parse_prior, prior_log_density, resolve_n0_strategy)
from .inference import (BayesFactorReport, ChiSquareReport,
                        bayes_factor_from_chains, binomial_point_null_bf,
                        chi_square_quantile, chi_square_test,
                        flat_dirichlet_bf, gamma_poisson_bf_curve,
                        harmonic_mean_marginal, lindley_example,
                        simulation_p_value, statistic_histogram,
                        uniformity_bayes_factor)
from .normalizer import (NormalizerTable, build_table, importance_log_Z,
                         thermodynamic_log_Z)
from .permutations import (DataSummary, ShuffleScheme, StatisticSpec,
                           apply_shuffle, get_statistic, load_reference_dataset,
                           load_smoosh_histogram, read_histogram_csv,
                           read_perm_file, sample_dataset, statistic_names,
                           summarize, write_perm_file)
from .samplers import (ChainConfig, ParameterChain, exchange_log_ratio,
                       exchange_step, metropolis_on_X, run_exchange_chain,
                       sample_F_level)

__version__ = "0.1.0"

__all__ = [
    "BayesFactorReport", "ChainConfig", "ChiSquareReport",
    "ChiSquareUniformityTest", "DataSummary", "DegenerateWeightsError",
    "DiagnosticError", "ExpFamilyModel", "NormalizerTable",
    "NormalizerUnavailableError", "OutOfRangeError", "ParameterChain",
    "PriorSpec", "ShuffleScheme", "ShuffleTestError", "StatisticSpec",
    "UniformityBayesTest", "ValidationError", "apply_shuffle",
    "bayes_factor_from_chains", "binomial_point_null_bf", "build_table",
    "chi_square_quantile", "chi_square_test",
    "conjugate_posterior_update", "conjugate_prior", "derangements",
    "exact_log_Z", "exact_walk_distribution", "exchange_log_ratio",
    "exchange_step",
    "fixed_point_counts", "flat_dirichlet_bf", "gamma_poisson_bf_curve",
    "gamma_prior", "get_statistic", "harmonic_mean_marginal",
    "load_reference_dataset", "load_smoosh_histogram",
    "importance_log_Z", "lindley_example", "make_model", "metropolis_on_X",
    "normal_prior", "parse_prior", "prior_log_density", "read_histogram_csv",
    "read_perm_file", "resolve_n0_strategy", "run_exchange_chain",
    "sample_F_level", "sample_dataset", "simulation_p_value",
    "statistic_histogram", "statistic_names", "summarize",
    "thermodynamic_log_Z", "total_variation",
    "uniformity_bayes_factor", "walk_tv_to_uniform", "write_perm_file",
]
