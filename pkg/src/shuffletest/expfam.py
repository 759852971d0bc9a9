"""Exponential families on the symmetric group, with conjugate priors.

The model is P_theta(sigma) = exp(theta . T(sigma) - m(theta)) with respect to
counting measure on S_n, where T is a d-dimensional sufficient statistic and
m(theta) = log Z(theta) is the log normalizer.  theta = 0 always recovers the
uniform distribution and m(0) = log n!.

Standard identities used throughout:

* E_theta[T] = grad m(theta), Cov_theta[T] = Hessian of m(theta);
* the conjugate prior pi(theta | n0, x0) proportional to
  exp(n0 x0 . theta - n0 m(theta)) updates linearly: after N observations
  with statistic mean T-bar the posterior is conjugate with parameters
  (n0 + N, (n0 x0 + N T-bar)/(n0 + N));
* under the conjugate prior, E[grad m(theta)] = x0, which is why x0 must lie
  in the interior of the convex hull of attainable statistic values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np

from . import combinatorics
from .exceptions import NormalizerUnavailableError, ValidationError
from .permutations import StatisticSpec, get_statistic
from .validation import check_count, check_positive_real

HULL_MARGIN = 1e-9

N0_STRATEGIES = ("fixed", "user", "sweep", "empirical_bayes", "limit_zero")


class ExactFixedPointNormalizer:
    """Closed-form normalizer for the fixed-point statistic (any n).

    Z(theta) = sum_j c_n(j) e^{theta j} with c_n(j) = C(n,j) D_{n-j}, so the
    log normalizer, its derivative (the mean) and second derivative (the
    variance) are all available by exact summation over the n+1 levels.
    """

    source = "exact"

    def __init__(self, n: int):
        self.n = check_count(n, "n", minimum=1)

    def log_Z(self, theta) -> float:
        return combinatorics.exact_log_Z(self.n, _as_scalar(theta))

    def mean(self, theta) -> np.ndarray:
        p = combinatorics.exact_fixed_point_pmf(self.n, _as_scalar(theta))
        j = np.arange(self.n + 1)
        return np.array([float((j * p).sum())])

    def covariance(self, theta) -> np.ndarray:
        p = combinatorics.exact_fixed_point_pmf(self.n, _as_scalar(theta))
        j = np.arange(self.n + 1)
        mu = float((j * p).sum())
        return np.array([[float((j * j * p).sum()) - mu * mu]])


def _as_scalar(theta) -> float:
    arr = np.atleast_1d(np.asarray(theta, dtype=float))
    if arr.size != 1:
        raise ValidationError(f"expected a scalar theta, got shape {arr.shape}")
    return float(arr[0])


@dataclass(frozen=True)
class ExpFamilyModel:
    """A tilted family on S_n at a fixed parameter value.

    ``normalizer`` must expose ``log_Z(theta) -> float``; the exact source
    additionally exposes closed-form ``mean``/``covariance``.  Models are
    immutable and safe to share across chains.
    """

    statistic: StatisticSpec
    theta: np.ndarray
    normalizer: object | None = None

    def __post_init__(self):
        theta = np.atleast_1d(np.asarray(self.theta, dtype=float))
        if theta.shape != (self.statistic.dimension,):
            raise ValidationError(
                f"theta must have shape ({self.statistic.dimension},), "
                f"got {theta.shape}")
        object.__setattr__(self, "theta", theta)

    @property
    def n(self) -> int:
        return self.statistic.n

    @property
    def normalizer_source(self) -> str:
        if self.normalizer is None:
            return "none"
        return getattr(self.normalizer, "source", "table")

    def at(self, theta) -> "ExpFamilyModel":
        return replace(self, theta=np.atleast_1d(np.asarray(theta, dtype=float)))

    def log_Z(self) -> float:
        if self.normalizer is None:
            raise NormalizerUnavailableError(
                f"model for statistic {self.statistic.name!r} has no normalizer "
                "attached; build one via the normalizer module")
        return float(self.normalizer.log_Z(self.theta))

    def log_density(self, perms) -> np.ndarray:
        """log P_theta(sigma) = theta . T(sigma) - m(theta), per row."""
        T = self.statistic.evaluate(perms)
        return T @ self.theta - self.log_Z()

    def mean_parameter(self) -> np.ndarray:
        """E_theta[T] = grad m(theta)."""
        if hasattr(self.normalizer, "mean"):
            return np.asarray(self.normalizer.mean(self.theta), dtype=float)
        return _fd_gradient(self._lz, self.theta)

    def covariance_parameter(self) -> np.ndarray:
        """Cov_theta[T] as the d x d Hessian of m(theta)."""
        if hasattr(self.normalizer, "covariance"):
            return np.asarray(self.normalizer.covariance(self.theta), dtype=float)
        return _fd_hessian(self._lz, self.theta)

    def _lz(self, theta: np.ndarray) -> float:
        if self.normalizer is None:
            raise NormalizerUnavailableError(
                f"model for statistic {self.statistic.name!r} has no normalizer "
                "attached; build one via the normalizer module")
        return float(self.normalizer.log_Z(theta))


def make_model(statistic, n: int | None = None, theta=0.0,
               normalizer="auto") -> ExpFamilyModel:
    """Convenience constructor.

    ``normalizer="auto"`` attaches the exact normalizer when one exists for
    the statistic (currently only fixed points) and otherwise leaves the model
    normalizer-free: sampling still works (Metropolis ratios cancel Z), but
    densities/moments raise until a table is attached.
    """
    if isinstance(statistic, str):
        if n is None:
            raise ValidationError("n is required when statistic is a name")
        statistic = get_statistic(statistic, n)
    if isinstance(normalizer, str) and normalizer == "auto":
        normalizer = (ExactFixedPointNormalizer(statistic.n)
                      if statistic.exact_counts else None)
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    return ExpFamilyModel(statistic, theta, normalizer)


def _fd_gradient(f: Callable, theta: np.ndarray, h: float = 1e-4) -> np.ndarray:
    grad = np.empty_like(theta)
    for i in range(theta.size):
        e = np.zeros_like(theta)
        e[i] = h
        grad[i] = (f(theta + e) - f(theta - e)) / (2 * h)
    return grad


def _fd_hessian(f: Callable, theta: np.ndarray, h: float = 1e-3) -> np.ndarray:
    d = theta.size
    H = np.empty((d, d))
    f0 = f(theta)
    for i in range(d):
        ei = np.zeros_like(theta)
        ei[i] = h
        H[i, i] = (f(theta + ei) - 2 * f0 + f(theta - ei)) / h ** 2
        for j in range(i + 1, d):
            ej = np.zeros_like(theta)
            ej[j] = h
            H[i, j] = H[j, i] = (
                f(theta + ei + ej) - f(theta + ei - ej)
                - f(theta - ei + ej) + f(theta - ei - ej)) / (4 * h ** 2)
    return H


# --------------------------------------------------------------------------
# priors
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class PriorSpec:
    """Prior over the family parameter.

    kind "normal": N(mu, sigma2 * I) on theta (sigma2 is a variance).
    kind "conjugate": density proportional to exp(n0 x0 . theta - n0 m(theta));
    proper only when x0 lies strictly inside the hull of attainable statistic
    values, which is validated when a statistic is supplied.
    kind "gamma": Gamma(shape alpha, rate beta) on a positive parameter (the
    Poisson rate lambda = e^theta in the fixed-point analyses); the density is
    evaluated at the positive value itself, -inf at values <= 0.
    """

    kind: str
    mu: np.ndarray | None = None
    sigma2: float | None = None
    n0: float | None = None
    x0: np.ndarray | None = None
    alpha: float | None = None
    beta: float | None = None

    def describe(self) -> str:
        if self.kind == "normal":
            mu = f"{self.mu[0]:g}" if self.mu.size == 1 else str(list(self.mu))
            return f"normal:{mu},{self.sigma2:g}"
        if self.kind == "conjugate":
            x0 = f"{self.x0[0]:g}" if self.x0.size == 1 else str(list(self.x0))
            return f"conjugate:{self.n0:g},{x0}"
        return f"gamma:{self.alpha:g},{self.beta:g}"


def normal_prior(mu, sigma2: float) -> PriorSpec:
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    sigma2 = check_positive_real(sigma2, "sigma2")
    return PriorSpec("normal", mu=mu, sigma2=sigma2)


def conjugate_prior(n0: float, x0, statistic: StatisticSpec | None = None) -> PriorSpec:
    n0 = check_positive_real(n0, "n0")
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    if statistic is not None:
        if x0.shape != (statistic.dimension,):
            raise ValidationError(
                f"x0 must have shape ({statistic.dimension},), got {x0.shape}")
        for coord, (lo, hi) in zip(x0, statistic.support_hull()):
            margin = HULL_MARGIN * max(1.0, hi - lo)
            if not (lo + margin < coord < hi - margin):
                raise ValidationError(
                    f"x0 component {coord} is not interior to the attainable "
                    f"range ({lo}, {hi}) of statistic {statistic.name!r}")
    return PriorSpec("conjugate", n0=n0, x0=x0)


def gamma_prior(alpha: float, beta: float) -> PriorSpec:
    return PriorSpec("gamma",
                     alpha=check_positive_real(alpha, "alpha"),
                     beta=check_positive_real(beta, "beta"))


def parse_prior(text: str, statistic: StatisticSpec | None = None) -> PriorSpec:
    """Parse the prior grammar: "normal:MU,SIGMA2" | "conjugate:N0,X0" |
    "gamma:ALPHA,BETA"."""
    if not isinstance(text, str) or ":" not in text:
        raise ValidationError(
            f"bad prior {text!r}; expected KIND:PARAM,PARAM "
            "(normal:MU,SIGMA2 | conjugate:N0,X0 | gamma:ALPHA,BETA)")
    kind, _, rest = text.partition(":")
    kind = kind.strip().lower()
    try:
        params = [float(tok) for tok in rest.split(",")]
    except ValueError:
        raise ValidationError(f"bad prior parameters in {text!r}") from None
    if len(params) != 2:
        raise ValidationError(f"prior {text!r} must have exactly two parameters")
    a, b = params
    d = statistic.dimension if statistic is not None else 1
    if kind == "normal":
        return normal_prior(np.full(d, a), b)
    if kind == "conjugate":
        return conjugate_prior(a, np.full(d, b), statistic)
    if kind == "gamma":
        return gamma_prior(a, b)
    raise ValidationError(f"unknown prior kind {kind!r} in {text!r}")


def prior_log_density(prior: PriorSpec, theta, m_eval: Callable | None = None) -> float:
    """Unnormalized log prior density at theta.

    Normal and gamma kinds are closed-form.  The conjugate kind needs the log
    normalizer m(theta), supplied as ``m_eval``.  Values outside the support
    (gamma at theta <= 0, when the prior parameterizes a positive rate)
    return -inf rather than raising.
    """
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    if prior.kind == "normal":
        if theta.shape != prior.mu.shape:
            raise ValidationError(
                f"theta shape {theta.shape} != prior mean shape {prior.mu.shape}")
        return float(-((theta - prior.mu) ** 2).sum() / (2.0 * prior.sigma2))
    if prior.kind == "gamma":
        lam = _as_scalar(theta)
        if lam <= 0.0:
            return -math.inf
        return ((prior.alpha - 1.0) * math.log(lam) - prior.beta * lam
                + prior.alpha * math.log(prior.beta) - math.lgamma(prior.alpha))
    if prior.kind == "conjugate":
        if m_eval is None:
            raise ValidationError(
                "conjugate prior density requires m_eval (a log-normalizer)")
        if theta.shape != prior.x0.shape:
            raise ValidationError(
                f"theta shape {theta.shape} != prior x0 shape {prior.x0.shape}")
        return float(prior.n0 * (prior.x0 @ theta) - prior.n0 * float(m_eval(theta)))
    raise ValidationError(f"unknown prior kind {prior.kind!r}")


def conjugate_posterior_update(prior: PriorSpec, N: int, tbar) -> PriorSpec:
    """Exact linear update (n0, x0) -> (n0 + N, (n0 x0 + N tbar)/(n0 + N)).

    Updating with two data batches in sequence equals one combined update.
    """
    if prior.kind != "conjugate":
        raise ValidationError(
            f"posterior update requires a conjugate prior, got {prior.kind!r}")
    N = check_count(N, "N", minimum=0)
    if N == 0:
        return prior
    tbar = np.atleast_1d(np.asarray(tbar, dtype=float))
    if tbar.shape != prior.x0.shape:
        raise ValidationError(
            f"tbar shape {tbar.shape} != prior x0 shape {prior.x0.shape}")
    n0_new = prior.n0 + N
    x0_new = (prior.n0 * prior.x0 + N * tbar) / n0_new
    return PriorSpec("conjugate", n0=n0_new, x0=x0_new)


@dataclass(frozen=True)
class PosteriorSpec:
    """A prior together with the sufficient data summary (N, T-bar)."""

    prior: PriorSpec
    N: int
    tbar: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "N", check_count(self.N, "N", minimum=0))
        object.__setattr__(
            self, "tbar", np.atleast_1d(np.asarray(self.tbar, dtype=float)))

    def conjugate_parameters(self) -> tuple[float, np.ndarray]:
        updated = conjugate_posterior_update(self.prior, self.N, self.tbar)
        return updated.n0, updated.x0

    def log_density(self, theta, m_eval: Callable | None = None) -> float:
        """Unnormalized log posterior: log prior + theta . (N tbar) - N m(theta)."""
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        lp = prior_log_density(self.prior, theta, m_eval=m_eval)
        if self.N == 0:
            return lp
        if m_eval is None:
            raise ValidationError("posterior density requires m_eval when N > 0")
        return lp + float(self.N * (self.tbar @ theta)) - self.N * float(m_eval(theta))


def resolve_n0_strategy(strategy: str, value: float | None = None,
                        sweep: Sequence[float] | None = None):
    """Map an n0-selection strategy name to concrete value(s).

    fixed -> 1.0; user -> the supplied value; sweep -> a grid of values (each
    producing its own Bayes factor); empirical_bayes and limit_zero are
    recognized but deliberately unimplemented.
    """
    if strategy not in N0_STRATEGIES:
        raise ValidationError(
            f"unknown n0 strategy {strategy!r}; choose from {N0_STRATEGIES}")
    if strategy == "fixed":
        return 1.0
    if strategy == "user":
        if value is None:
            raise ValidationError("n0 strategy 'user' requires a value")
        return check_positive_real(value, "n0")
    if strategy == "sweep":
        if sweep is None or len(sweep) == 0:
            raise ValidationError("n0 strategy 'sweep' requires a grid of values")
        return [check_positive_real(v, "n0") for v in sweep]
    if strategy == "empirical_bayes":
        raise NotImplementedError(
            "empirical_bayes n0 selection (maximizing the marginal likelihood "
            "over n0) is not implemented; pass strategy='user' with an "
            "explicit n0 instead")
    raise NotImplementedError(
        "limit_zero n0 selection (the n0 -> 0 noninformative limit) is not "
        "implemented; pass strategy='user' with a small explicit n0 instead")
