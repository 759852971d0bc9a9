"""Estimating the log normalizer m(theta) = log Z(theta) when no closed form
exists.

Three routes:

* exact level-set counting (fixed-point statistic only; delegated to
  combinatorics);
* importance sampling from the uniform distribution:
  Z(theta)/n! = E_uniform[e^{theta.T}], so log Z = log n! + log-mean of
  exponential tilts over M uniform permutations;
* thermodynamic integration along the ray from 0 to theta:
  m(theta) = m(0) + integral_0^1 theta . E_{t theta}[T] dt, with m(0) = log n!
  known exactly and the integrand estimated by Metropolis sampling.

Estimates on a theta grid are interpolated by a monotone cubic, anchored so
that log Z(0) = log n! exactly.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import PchipInterpolator

from . import combinatorics
from .exceptions import (DegenerateWeightsError, DiagnosticError,
                         OutOfRangeError, ValidationError)
from .permutations import StatisticSpec, get_statistic
from .samplers import ChainConfig, _batch_mean_statistic
from .validation import check_count, check_seed

TABLE_FORMAT_VERSION = 1
ESS_FLOOR = 10.0


def _resolve_statistic(statistic, n: int | None) -> StatisticSpec:
    if isinstance(statistic, StatisticSpec):
        return statistic
    if n is None:
        raise ValidationError("n is required when statistic is given by name")
    return get_statistic(statistic, n)


def _node_seed(seed: int, index: int) -> int:
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(index,))
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> 1)


# --------------------------------------------------------------------------
# route 1: importance sampling from uniform
# --------------------------------------------------------------------------

def importance_log_Z(statistic, n: int | None, theta, M: int, seed: int = 0,
                     *, batch_size: int = 250_000) -> tuple[float, float]:
    """Importance-sampling estimate of log Z(theta) with delta-method stderr.

    Proposal is always the uniform distribution (exactly samplable by
    Fisher-Yates), so weights are w_i = e^{theta . T(sigma_i)} and
    log Z = log n! + log((1/M) sum w_i).  Fails with DegenerateWeightsError
    when the weight effective sample size (sum w)^2 / sum w^2 drops below
    10 -- heavy tilts need the thermodynamic route instead.
    """
    stat = _resolve_statistic(statistic, n)
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    if theta.shape != (stat.dimension,):
        raise ValidationError(
            f"theta must have shape ({stat.dimension},), got {theta.shape}")
    M = check_count(M, "M", minimum=1)
    if M < 1000:
        raise ValidationError(f"importance sampling needs M >= 1000, got {M}")
    check_seed(seed)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    base = np.arange(1, stat.n + 1, dtype=np.int64)
    l1 = -math.inf  # log sum of weights
    l2 = -math.inf  # log sum of squared weights
    done = 0
    while done < M:
        b = min(batch_size, M - done)
        perms = rng.permuted(np.broadcast_to(base, (b, stat.n)), axis=1)
        lw = stat.evaluate(perms) @ theta
        hi = lw.max()
        l1 = np.logaddexp(l1, hi + math.log(np.exp(lw - hi).sum()))
        l2 = np.logaddexp(l2, 2 * hi + math.log(np.exp(2 * (lw - hi)).sum()))
        done += b
    log_M = math.log(M)
    ess = math.exp(2 * l1 - l2)
    if ess < ESS_FLOOR:
        raise DegenerateWeightsError(
            f"importance weights degenerate (ESS {ess:.2f} < {ESS_FLOOR:g} "
            f"with M={M}); increase M or use the thermodynamic route",
            ess=ess)
    log_mean = l1 - log_M
    # delta method: sd(log mean w) = sd(w) / (sqrt(M) mean w)
    ratio = 2 * l1 - log_M - l2  # log[(sum w)^2 / (M sum w^2)]
    if ratio >= 0.0:
        stderr = 0.0  # constant weights (theta = 0)
    else:
        log_var = l2 + math.log1p(-math.exp(ratio)) - math.log(M - 1)
        stderr = math.exp(0.5 * log_var - 0.5 * log_M - log_mean)
    return math.lgamma(stat.n + 1) + log_mean, stderr


def importance_ess_estimate(statistic, n: int | None, theta, M: int,
                            seed: int = 0) -> float:
    """ESS of the importance weights without the degeneracy guard (diagnostic)."""
    stat = _resolve_statistic(statistic, n)
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    base = np.arange(1, stat.n + 1, dtype=np.int64)
    perms = rng.permuted(np.broadcast_to(base, (M, stat.n)), axis=1)
    lw = stat.evaluate(perms) @ theta
    hi = lw.max()
    l1 = hi + math.log(np.exp(lw - hi).sum())
    l2 = 2 * hi + math.log(np.exp(2 * (lw - hi)).sum())
    return math.exp(2 * l1 - l2)


# --------------------------------------------------------------------------
# route 2: thermodynamic integration
# --------------------------------------------------------------------------

def thermodynamic_log_Z(statistic, n: int | None, theta,
                        grid_points: int = 21,
                        mcmc_config: ChainConfig | None = None,
                        seed: int = 0, n_chains: int = 64
                        ) -> tuple[float, float]:
    """Thermodynamic-integration estimate of log Z(theta).

    Simpson quadrature of g(t) = theta . E_{t theta}[T] over t in [0, 1],
    anchored at m(0) = log n!.  Each node expectation comes from n_chains
    parallel Metropolis chains; the t = 0 node uses the exact uniform mean
    when the statistic declares one.  The returned stderr combines the
    between-chain Monte Carlo error with a Richardson error estimate from
    halving the grid (available when grid_points = 4m + 1).
    """
    stat = _resolve_statistic(statistic, n)
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    if theta.shape != (stat.dimension,):
        raise ValidationError(
            f"theta must have shape ({stat.dimension},), got {theta.shape}")
    G = check_count(grid_points, "grid_points", minimum=5)
    if G % 2 == 0:
        raise ValidationError(f"grid_points must be odd for Simpson, got {G}")
    check_seed(seed)
    cfg = mcmc_config or ChainConfig(steps=4000, burnin=1000, seed=seed)
    log_n_fact = math.lgamma(stat.n + 1)
    if not np.any(theta):
        return log_n_fact, 0.0
    t_grid = np.linspace(0.0, 1.0, G)
    g = np.empty(G)
    g_err = np.empty(G)
    for i, t in enumerate(t_grid):
        if i == 0 and stat.uniform_mean:
            mean = np.asarray(stat.uniform_mean, dtype=float)
            err = np.zeros(stat.dimension)
        else:
            mean, err = _batch_mean_statistic(
                stat, t * theta, n_chains, cfg.steps, cfg.burnin,
                _node_seed(seed, i))
        g[i] = float(theta @ mean)
        g_err[i] = math.sqrt(float((theta ** 2) @ (err ** 2)))

    def simpson(values: np.ndarray, h: float) -> float:
        w = np.ones(values.size)
        w[1:-1:2] = 4.0
        w[2:-1:2] = 2.0
        return float(h / 3.0 * (w @ values))

    h = 1.0 / (G - 1)
    integral = simpson(g, h)
    w = np.ones(G)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    mc_var = float(((h / 3.0 * w * g_err) ** 2).sum())
    quad_err = 0.0
    if (G - 1) % 4 == 0:
        coarse = simpson(g[::2], 2 * h)
        quad_err = abs(integral - coarse) / 15.0
    return log_n_fact + integral, math.sqrt(mc_var + quad_err ** 2)


# --------------------------------------------------------------------------
# interpolation tables
# --------------------------------------------------------------------------

class NormalizerTable:
    """Grid of log Z values along a parameter ray, with cubic interpolation.

    For d = 1 the ray is the theta axis itself; for d > 1 the table covers
    {t * direction} and queries must lie on that ray.  log Z(0) is anchored
    to log n! exactly whenever 0 is inside the grid range.  Convexity of
    log Z along the ray is validated up to 3 combined standard errors.
    """

    source = "table"

    def __init__(self, statistic_name: str, n: int, method: str, seed: int,
                 grid: np.ndarray, log_z: np.ndarray, stderr: np.ndarray,
                 direction=None):
        self.statistic_name = statistic_name
        self.n = check_count(n, "n", minimum=1)
        self.method = method
        self.seed = check_seed(seed)
        self.grid = np.asarray(grid, dtype=float)
        self.log_z = np.asarray(log_z, dtype=float)
        self.stderr = np.asarray(stderr, dtype=float)
        if direction is None:
            direction = [1.0]
        self.direction = np.asarray(direction, dtype=float)
        if self.grid.ndim != 1 or self.grid.size < 4:
            raise ValidationError("table needs at least 4 grid points")
        if np.any(np.diff(self.grid) <= 0):
            raise ValidationError("table grid must be strictly increasing")
        if self.log_z.shape != self.grid.shape or \
                self.stderr.shape != self.grid.shape:
            raise ValidationError("grid, log_z and stderr lengths differ")
        self._check_convexity()
        self._interp = PchipInterpolator(self.grid, self.log_z)
        self._deriv = self._interp.derivative()

    def _check_convexity(self) -> None:
        # Convexity via divided differences so non-uniform grids (e.g. with an
        # inserted 0 node) are judged correctly; tolerance is 3 combined
        # standard errors of each slope difference.
        z = self.log_z
        s = self.stderr
        h = np.diff(self.grid)
        second = (z[2:] - z[1:-1]) / h[1:] - (z[1:-1] - z[:-2]) / h[:-1]
        tol = 3.0 * np.sqrt((s[2:] / h[1:]) ** 2
                            + (s[1:-1] * (1 / h[1:] + 1 / h[:-1])) ** 2
                            + (s[:-2] / h[:-1]) ** 2) + 1e-9
        bad = second < -tol
        if np.any(bad):
            i = int(np.argmax(bad))
            raise DiagnosticError(
                "log Z table is not convex along the grid (slope difference "
                f"{second[i]:.4g} < -{tol[i]:.4g} near theta={self.grid[i + 1]:g}); "
                "the estimates are unreliable -- rebuild with more samples")

    def _project(self, theta) -> float:
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        if theta.shape != self.direction.shape:
            raise ValidationError(
                f"theta shape {theta.shape} does not match table direction "
                f"shape {self.direction.shape}")
        denom = float(self.direction @ self.direction)
        t = float(theta @ self.direction) / denom
        if not np.allclose(theta, t * self.direction, atol=1e-9):
            raise ValidationError(
                "query lies off the table's ray; build a table along the "
                "required direction")
        return t

    def log_Z(self, theta) -> float:
        t = self._project(theta)
        if t < self.grid[0] - 1e-12 or t > self.grid[-1] + 1e-12:
            raise OutOfRangeError(
                f"theta={t:g} outside table range "
                f"[{self.grid[0]:g}, {self.grid[-1]:g}]")
        return float(self._interp(np.clip(t, self.grid[0], self.grid[-1])))

    def mean(self, theta) -> np.ndarray:
        """grad m via the interpolant's derivative (1-d tables only)."""
        if self.direction.size != 1:
            raise ValidationError(
                "ray tables only provide directional derivatives; "
                "mean_parameter is unavailable for d > 1")
        t = self._project(theta)
        if t < self.grid[0] - 1e-12 or t > self.grid[-1] + 1e-12:
            raise OutOfRangeError(
                f"theta={t:g} outside table range "
                f"[{self.grid[0]:g}, {self.grid[-1]:g}]")
        return np.array([float(self._deriv(np.clip(t, self.grid[0],
                                                   self.grid[-1])))])

    def stderr_at(self, theta) -> float:
        t = self._project(theta)
        i = int(np.clip(np.searchsorted(self.grid, t), 1, self.grid.size - 1))
        return float(max(self.stderr[i - 1], self.stderr[i]))

    def to_json(self) -> dict:
        return {
            "version": TABLE_FORMAT_VERSION,
            "statistic": self.statistic_name,
            "n": self.n,
            "method": self.method,
            "seed": self.seed,
            "direction": [float(v) for v in self.direction],
            "grid": [{"theta": float(t), "log_z": float(z), "stderr": float(s)}
                     for t, z, s in zip(self.grid, self.log_z, self.stderr)],
        }

    @classmethod
    def from_json(cls, doc: dict) -> "NormalizerTable":
        try:
            if doc["version"] != TABLE_FORMAT_VERSION:
                raise ValidationError(
                    f"unsupported table version {doc['version']!r}")
            rows = doc["grid"]
            return cls(doc["statistic"], doc["n"], doc["method"], doc["seed"],
                       np.array([r["theta"] for r in rows]),
                       np.array([r["log_z"] for r in rows]),
                       np.array([r["stderr"] for r in rows]),
                       direction=doc.get("direction"))
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"malformed normalizer table: {exc}") from None

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "NormalizerTable":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))


TABLE_METHODS = ("exact", "importance", "thermodynamic")


def build_table(statistic, n: int | None = None, theta_range=(-3.0, 3.0),
                resolution: int = 61, method: str = "exact", seed: int = 0,
                M: int = 100_000, mcmc_config: ChainConfig | None = None,
                thermo_grid_points: int = 21, direction=None) -> NormalizerTable:
    """Build a NormalizerTable over a theta grid by the requested method.

    The grid always contains 0 when the range covers it, and the value there
    is pinned to log n! with zero stderr regardless of method.
    """
    stat = _resolve_statistic(statistic, n)
    if method not in TABLE_METHODS:
        raise ValidationError(
            f"unknown method {method!r}; choose from {TABLE_METHODS}")
    lo, hi = float(theta_range[0]), float(theta_range[1])
    if not lo < hi:
        raise ValidationError(f"empty theta range [{lo}, {hi}]")
    resolution = check_count(resolution, "resolution", minimum=4)
    if direction is None:
        if stat.dimension != 1:
            raise ValidationError(
                f"statistic {stat.name!r} is {stat.dimension}-dimensional; "
                "pass an explicit ray direction")
        direction = np.array([1.0])
    else:
        direction = np.asarray(direction, dtype=float)
        if direction.shape != (stat.dimension,) or not np.any(direction):
            raise ValidationError("direction must be a nonzero d-vector")
    grid = np.linspace(lo, hi, resolution)
    grid[np.isclose(grid, 0.0, atol=1e-14)] = 0.0  # exact anchor point
    if lo <= 0.0 <= hi and 0.0 not in grid:
        grid = np.sort(np.append(grid, 0.0))
    if method == "exact" and not stat.exact_counts:
        raise ValidationError(
            f"exact normalizers are only available for statistics with exact "
            f"level counts (fixed points), not {stat.name!r}")
    log_z = np.empty(grid.size)
    stderr = np.zeros(grid.size)
    for i, t in enumerate(grid):
        point = t * direction
        if t == 0.0:
            log_z[i] = math.lgamma(stat.n + 1)  # anchored, never estimated
            continue
        if method == "exact":
            log_z[i] = combinatorics.exact_log_Z(stat.n, float(point[0]))
        elif method == "importance":
            log_z[i], stderr[i] = importance_log_Z(
                stat, None, point, M, seed=_node_seed(seed, i))
        else:
            log_z[i], stderr[i] = thermodynamic_log_Z(
                stat, None, point, grid_points=thermo_grid_points,
                mcmc_config=mcmc_config, seed=_node_seed(seed, i))
    return NormalizerTable(stat.name, stat.n, method, seed, grid, log_z,
                           stderr, direction=direction)
