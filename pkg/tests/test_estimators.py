import numpy as np
import pytest
from sklearn.base import clone

from shuffletest import (ChiSquareUniformityTest, ShuffleScheme,
                         UniformityBayesTest, load_reference_dataset,
                         sample_dataset)
from shuffletest.exceptions import ValidationError


@pytest.fixture(scope="module")
def toy_X():
    scheme = ShuffleScheme(kind="random_transpositions", n=6, steps=6, seed=123)
    return sample_dataset(scheme, 50)


def test_get_set_params_round_trip():
    est = UniformityBayesTest(chains=3, steps=300, seed=7)
    params = est.get_params()
    assert params["chains"] == 3 and params["prior"] == "normal:0,0.1"
    est.set_params(chains=5, prior="gamma:2,2")
    assert est.chains == 5 and est.prior == "gamma:2,2"
    cloned = clone(est)
    assert cloned.get_params() == est.get_params()
    assert clone(ChiSquareUniformityTest(model="uniform:7")).model == "uniform:7"


def test_bayes_estimator_fit_predict(toy_X):
    est = UniformityBayesTest(chains=3, steps=300, burnin=100, seed=11)
    assert est.fit(toy_X) is est
    assert est.n_features_in_ == 6
    assert np.isfinite(est.log_bf_)
    assert est.bayes_factor_ == pytest.approx(np.exp(est.log_bf_))
    assert 0.0 < est.posterior_null_ < 1.0
    assert len(est.per_chain_bf_) == 3
    assert est.report_.method == "exchange+harmonic_mean_median"
    # predict applies the posterior threshold to the fitted value
    assert est.predict() == int(est.posterior_null_ >= 0.5)
    assert est.predict(threshold=0.0) == 1
    assert est.predict(threshold=1.0) == 0

    # same data, same seed: identical results
    est2 = UniformityBayesTest(chains=3, steps=300, burnin=100, seed=11)
    assert est2.fit(toy_X).log_bf_ == est.log_bf_


def test_bayes_estimator_predict_before_fit():
    with pytest.raises(ValidationError, match="call fit before predict"):
        UniformityBayesTest().predict()
    with pytest.raises(ValidationError, match="call fit before predict"):
        ChiSquareUniformityTest().predict()


def test_bayes_estimator_rejects_bad_input():
    with pytest.raises(ValidationError):
        UniformityBayesTest(chains=2, steps=100).fit(np.array([[1, 1, 2]]))


def test_chi_square_estimator_on_undermixed_deck():
    X, _ = load_reference_dataset(100)  # 100 transpositions is far too few
    est = ChiSquareUniformityTest().fit(X)
    assert est.n_features_in_ == 52
    assert est.p_value_ < 0.01
    assert est.df_ == len(est.report_.categories) - 1
    assert est.predict() == 0            # uniformity rejected at 5%
    assert est.predict(alpha=0.0) == 1   # trivially not rejected at level 0


def test_chi_square_estimator_on_uniform_data():
    scheme = ShuffleScheme(kind="uniform", n=10, steps=1, seed=2)
    X = sample_dataset(scheme, 400)
    est = ChiSquareUniformityTest().fit(X)
    assert est.p_value_ > 1e-4
    assert est.report_.model == "poisson:1"
