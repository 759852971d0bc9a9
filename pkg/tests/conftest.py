import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from oracles import PosteriorQuadrature  # noqa: E402


@pytest.fixture(scope="session")
def quad6():
    """Quadrature oracle for the toy n=6 fixed-point model, prior N(0, 0.1)."""
    return PosteriorQuadrature(6, mu=0.0, v=0.1)


@pytest.fixture(scope="session")
def quad52():
    return PosteriorQuadrature(52, mu=0.0, v=0.1)


@pytest.fixture(scope="session")
def toy_data():
    """Small n=6 dataset: 50 walks of 6 random transpositions, seed 123."""
    from shuffletest import ShuffleScheme, get_statistic, sample_dataset, summarize

    scheme = ShuffleScheme(kind="random_transpositions", n=6, steps=6, seed=123)
    X = sample_dataset(scheme, 50)
    stat = get_statistic("fixed_points", 6)
    summary = summarize(X, stat)
    assert int(summary.stat_sum[0]) == 62  # pinned so oracle constants apply
    return X, summary


@pytest.fixture
def rng():
    return np.random.default_rng(2026)
