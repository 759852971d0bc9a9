"""Markov chain samplers: Metropolis on the permutation space, exact
level-law sampling for the fixed-point statistic, and the exchange algorithm
on parameter space for posteriors with intractable normalizers."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import combinatorics
from .exceptions import DiagnosticError, ValidationError
from .expfam import ExpFamilyModel, PriorSpec, prior_log_density
from .permutations import DataSummary, StatisticSpec
from .validation import check_count, check_positive_real, check_seed


@dataclass(frozen=True)
class ChainConfig:
    steps: int = 1000
    burnin: int = 200
    proposal_scale: float = 0.2
    seed: int = 0
    thin: int = 1

    def __post_init__(self):
        check_count(self.steps, "steps", minimum=1)
        check_count(self.burnin, "burnin", minimum=0)
        if not self.steps > self.burnin:
            raise ValidationError(
                f"steps ({self.steps}) must exceed burnin ({self.burnin})")
        check_positive_real(self.proposal_scale, "proposal_scale")
        check_seed(self.seed)
        check_count(self.thin, "thin", minimum=1)


@dataclass(frozen=True)
class ParameterChain:
    """Post-burn-in, thinned draws of theta plus run diagnostics."""

    samples: np.ndarray        # (M, d)
    accepted: np.ndarray       # (M,) 1 where the kept step was an acceptance
    acceptance_rate: float
    seed: int
    ess: float
    rhat: float
    proposal_scale: float      # frozen post-burn-in scale
    approximate: bool = False  # True when the auxiliary draw was inexact
    warnings: tuple = ()

    def __len__(self) -> int:
        return self.samples.shape[0]

    def diagnostics(self) -> dict:
        return {"ess": self.ess, "rhat": self.rhat,
                "acceptance_rate": self.acceptance_rate, "seed": self.seed}

    def to_csv(self, path) -> None:
        # chain dump: step, theta..., accepted
        d = self.samples.shape[1]
        header = "step," + ",".join(f"theta{i}" for i in range(d)) + ",accepted"
        lines = [header]
        for step, (row, acc) in enumerate(zip(self.samples, self.accepted)):
            vals = ",".join(repr(float(v)) for v in row)
            lines.append(f"{step},{vals},{int(acc)}")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")


def _rng(seed: int, *spawn) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=seed, spawn_key=tuple(spawn))
    return np.random.Generator(np.random.PCG64(ss))


# --------------------------------------------------------------------------
# Metropolis on the permutation space
# --------------------------------------------------------------------------

def metropolis_on_X(model: ExpFamilyModel, config: ChainConfig) -> np.ndarray:
    """Random-transposition Metropolis chain targeting P_theta on S_n.

    Proposal: swap two independently uniform positions (L = R allowed, a held
    identity move).  Acceptance min(1, e^{theta.(T' - T)}) needs no
    normalizer.  Returns the post-burn-in, thinned states as an (M, n) array.
    At theta = 0 every proposal is accepted and the chain is exactly the
    random-transposition walk.
    """
    stat = model.statistic
    n = stat.n
    theta = model.theta
    rng = _rng(config.seed)
    perm = np.arange(1, n + 1, dtype=np.int64)
    keep = (config.steps - config.burnin) // config.thin
    out = np.empty((keep, n), dtype=np.int64)
    LR = rng.integers(0, n, size=(config.steps, 2))
    logu = np.log(rng.random(config.steps))
    fast_fixed = stat.name == "fixed_points"
    if not fast_fixed:
        T_cur = stat.evaluate(perm[None, :])[0]
    kept = 0
    for step in range(config.steps):
        L, R = LR[step]
        if L != R:
            if fast_fixed:
                # only positions L, R can change their fixed-point status
                before = int(perm[L] == L + 1) + int(perm[R] == R + 1)
                after = int(perm[R] == L + 1) + int(perm[L] == R + 1)
                dl = theta[0] * (after - before)
            else:
                perm[L], perm[R] = perm[R], perm[L]
                T_new = stat.evaluate(perm[None, :])[0]
                dl = float(theta @ (T_new - T_cur))
                perm[L], perm[R] = perm[R], perm[L]
            if dl >= 0.0 or logu[step] < dl:
                perm[L], perm[R] = perm[R], perm[L]
                if not fast_fixed:
                    T_cur = T_new
        if step >= config.burnin and (step - config.burnin) % config.thin == 0 \
                and kept < keep:
            out[kept] = perm
            kept += 1
    return out[:kept]


def _batch_mean_statistic(stat: StatisticSpec, theta: np.ndarray,
                          n_chains: int, steps: int, burnin: int,
                          seed: int) -> tuple[np.ndarray, np.ndarray]:
    """E_theta[T] by n_chains parallel Metropolis chains, vectorized per step.

    Returns (mean over chains of per-chain means, stderr across chains).
    """
    n = stat.n
    rng = _rng(seed)
    C = n_chains
    perms = np.tile(np.arange(1, n + 1, dtype=np.int64), (C, 1))
    T = stat.evaluate(perms)
    rows = np.arange(C)
    sums = np.zeros((C, stat.dimension))
    kept = 0
    for step in range(steps):
        L = rng.integers(0, n, size=C)
        R = rng.integers(0, n, size=C)
        prop = perms.copy()
        prop[rows, L] = perms[rows, R]
        prop[rows, R] = perms[rows, L]
        T_new = stat.evaluate(prop)
        dl = (T_new - T) @ theta
        acc = np.log(rng.random(C)) < dl
        perms[acc] = prop[acc]
        T[acc] = T_new[acc]
        if step >= burnin:
            sums += T
            kept += 1
    means = sums / kept                       # (C, d) per-chain means
    mean = means.mean(axis=0)
    stderr = means.std(axis=0, ddof=1) / math.sqrt(C)
    return mean, stderr


# --------------------------------------------------------------------------
# exact auxiliary sampling for the fixed-point statistic
# --------------------------------------------------------------------------

def _level_log_weights(n: int, theta: float) -> np.ndarray:
    lc = combinatorics.FixedPointCounts.build(n).log_counts()
    return theta * np.arange(n + 1) + lc


def sample_F_level(n: int, theta: float, rng: np.random.Generator) -> int:
    """One exact draw of F under P_theta: Gumbel-max over the n+1 levels.

    The level law is P(F=j) proportional to c_n(j) e^{theta j}; no Markov
    chain is involved, so the draw is exact for any theta.
    """
    lw = _level_log_weights(n, float(theta))
    g = rng.gumbel(size=n + 1)
    with np.errstate(invalid="ignore"):
        return int(np.argmax(lw + g))


def sample_F_level_sum(n: int, theta: float, N: int, rng: np.random.Generator) -> float:
    """Sum of N i.i.d. exact F draws, via one multinomial over the levels."""
    p = combinatorics.exact_fixed_point_pmf(n, float(theta))
    counts = rng.multinomial(N, p / p.sum())
    return float(np.arange(n + 1) @ counts)


def make_aux_sampler(stat: StatisticSpec, aux_chain_steps: int | None = None):
    """Auxiliary-data sampler w ~ P_theta^N returning sum_i T(w_i).

    Exact (multinomial over level sets) for statistics with exact counts;
    otherwise an inner Metropolis run provides an approximate draw and the
    result is flagged.  Returns (sampler, approximate_flag).
    """
    if stat.exact_counts:
        def aux(theta: np.ndarray, N: int, rng: np.random.Generator) -> np.ndarray:
            return np.array([sample_F_level_sum(stat.n, float(theta[0]), N, rng)])
        return aux, False

    steps = aux_chain_steps or max(200, 20 * stat.n)

    def aux(theta: np.ndarray, N: int, rng: np.random.Generator) -> np.ndarray:
        # approximate: N states spaced n apart from one inner chain
        n = stat.n
        perm = np.arange(1, n + 1, dtype=np.int64)
        T_cur = stat.evaluate(perm[None, :])[0]
        total = np.zeros(stat.dimension)
        taken = 0
        step = 0
        space = max(1, n)
        while taken < N:
            L, R = rng.integers(0, n, size=2)
            if L != R:
                perm[L], perm[R] = perm[R], perm[L]
                T_new = stat.evaluate(perm[None, :])[0]
                dl = float(theta @ (T_new - T_cur))
                if dl >= 0.0 or math.log(rng.random()) < dl:
                    T_cur = T_new
                else:
                    perm[L], perm[R] = perm[R], perm[L]
            step += 1
            if step >= steps and (step - steps) % space == 0:
                total += T_cur
                taken += 1
        return total

    return aux, True


# --------------------------------------------------------------------------
# exchange algorithm
# --------------------------------------------------------------------------

def exchange_log_ratio(theta, prop, data_stat_sum, aux_stat_sum,
                       prior: PriorSpec, *, m_eval=None) -> float:
    """Log acceptance ratio for an exchange move theta -> prop.

    With S_y the data statistic sum and S_w the statistic sum of N auxiliary
    points drawn at prop,

        log a = [log pi(prop) - log pi(theta)] + (prop - theta) . (S_y - S_w).

    Every Z cancels: the auxiliary ratio f(w|theta)/f(w|prop) is an unbiased
    estimator of (Z(theta)/Z(prop))^N, which replaces the intractable
    normalizers.  Pass aux_stat_sum=None for the no-data (prior-only) case.
    """
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    prop = np.atleast_1d(np.asarray(prop, dtype=float))
    log_a = (prior_log_density(prior, prop, m_eval=m_eval)
             - prior_log_density(prior, theta, m_eval=m_eval))
    if aux_stat_sum is not None:
        diff = np.atleast_1d(np.asarray(data_stat_sum, dtype=float)
                             - np.asarray(aux_stat_sum, dtype=float))
        log_a += float((prop - theta) @ diff)
    return log_a


def exchange_step(theta: np.ndarray, data_stat_sum: np.ndarray, N: int,
                  prior: PriorSpec, proposal_scale: float,
                  rng: np.random.Generator, *, aux_sampler, m_eval=None
                  ) -> tuple[np.ndarray, bool]:
    """One exchange-algorithm transition.

    Propose theta' by a symmetric Gaussian random walk; draw auxiliary data
    w (N i.i.d. points) at theta'; accept with probability
    min(1, exp(exchange_log_ratio)).  A proposal with zero prior density is
    rejected before any auxiliary draw.
    """
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    prop = theta + proposal_scale * rng.standard_normal(theta.size)
    if prior_log_density(prior, prop, m_eval=m_eval) == -math.inf:
        return theta, False
    S_w = aux_sampler(prop, N, rng) if N > 0 else None
    log_a = exchange_log_ratio(theta, prop, data_stat_sum, S_w, prior,
                               m_eval=m_eval)
    if log_a >= 0.0 or math.log(rng.random()) < log_a:
        return prop, True
    return theta, False


def run_exchange_chain(data, statistic: StatisticSpec, prior: PriorSpec,
                       config: ChainConfig, *, m_eval=None,
                       aux_chain_steps: int | None = None) -> ParameterChain:
    """Exchange-algorithm chain over theta given permutation data.

    data may be None or empty, in which case the chain samples the prior.
    The proposal scale adapts toward a target acceptance rate during burn-in
    only and is frozen afterwards (adapting a running chain would break
    reversibility).  Deterministic given config.seed.
    """
    d = statistic.dimension
    if isinstance(data, DataSummary):
        N = data.N
        S_y = np.atleast_1d(np.asarray(data.stat_sum, dtype=float))
    elif data is None or (hasattr(data, "__len__") and len(data) == 0):
        N = 0
        S_y = np.zeros(d)
    else:
        T = statistic.evaluate(data)
        N = T.shape[0]
        S_y = T.sum(axis=0)
    aux, approximate = make_aux_sampler(statistic, aux_chain_steps)
    rng = _rng(config.seed)
    theta = np.zeros(d)
    scale = config.proposal_scale
    target = 0.44 if d == 1 else 0.234
    keep = (config.steps - config.burnin) // config.thin
    samples = np.empty((keep, d))
    kept_acc = np.empty(keep, dtype=np.int64)
    n_accept = 0
    window_acc = 0
    kept = 0
    for step in range(config.steps):
        theta, accepted = exchange_step(theta, S_y, N, prior, scale, rng,
                                        aux_sampler=aux, m_eval=m_eval)
        n_accept += accepted
        window_acc += accepted
        if step < config.burnin and (step + 1) % 50 == 0:
            # Robbins-Monro style scale adaptation, burn-in only
            rate = window_acc / 50.0
            scale = float(np.clip(scale * math.exp(rate - target), 1e-4, 25.0))
            window_acc = 0
        if step >= config.burnin and (step - config.burnin) % config.thin == 0 \
                and kept < keep:
            samples[kept] = theta
            kept_acc[kept] = accepted
            kept += 1
    samples = samples[:kept]
    kept_acc = kept_acc[:kept]
    rate = n_accept / config.steps
    ess = effective_sample_size(samples)
    rhat = split_rhat(samples[None, :, :])
    warnings = []
    if ess < 50:
        warnings.append(f"low effective sample size ({ess:.1f})")
    if rate < 0.05 or rate > 0.95:
        warnings.append(f"extreme acceptance rate ({rate:.3f})")
    if approximate:
        warnings.append("auxiliary draws are approximate (inner Metropolis); "
                        "exactness of the exchange kernel is not guaranteed")
    return ParameterChain(samples=samples, accepted=kept_acc,
                          acceptance_rate=rate, seed=config.seed, ess=ess,
                          rhat=rhat, proposal_scale=scale,
                          approximate=approximate, warnings=tuple(warnings))


def replicate_exchange_chains(data, statistic: StatisticSpec, prior: PriorSpec,
                              config: ChainConfig, n_chains: int, *,
                              m_eval=None) -> list[ParameterChain]:
    """Independent replicate chains with per-chain derived seeds.

    Chains are exchangeable and independently seeded; results are assembled
    in chain order, so the output is deterministic regardless of scheduling.
    """
    check_count(n_chains, "n_chains", minimum=1)
    chains = []
    for i in range(n_chains):
        sub = np.random.SeedSequence(entropy=config.seed, spawn_key=(i,))
        chain_seed = int(sub.generate_state(1, dtype=np.uint64)[0] >> 1)
        cfg = ChainConfig(steps=config.steps, burnin=config.burnin,
                          proposal_scale=config.proposal_scale,
                          seed=chain_seed, thin=config.thin)
        chains.append(run_exchange_chain(data, statistic, prior, cfg,
                                         m_eval=m_eval))
    return chains


# --------------------------------------------------------------------------
# diagnostics
# --------------------------------------------------------------------------

def _autocovariance(x: np.ndarray) -> np.ndarray:
    # FFT autocovariance, biased (1/M) normalization
    M = x.size
    centered = x - x.mean()
    nfft = 1 << (2 * M - 1).bit_length()
    f = np.fft.rfft(centered, nfft)
    acov = np.fft.irfft(f * np.conj(f), nfft)[:M].real / M
    return acov


def effective_sample_size(samples: np.ndarray) -> float:
    """ESS from the initial-positive-sequence estimator of the integrated
    autocorrelation time; for d > 1 the minimum over coordinates."""
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    if samples.ndim == 2 and samples.shape[0] < samples.shape[1] and \
            samples.shape[0] == 1:
        samples = samples.T
    M = samples.shape[0]
    if M < 4:
        return float(M)
    ess = math.inf
    for k in range(samples.shape[1]):
        acov = _autocovariance(samples[:, k])
        if acov[0] <= 0:
            ess = min(ess, float(M))  # constant coordinate carries no info
            continue
        rho = acov / acov[0]
        # pair sums Gamma_m = rho_{2m} + rho_{2m+1}; stop at first negative,
        # enforce monotone nonincreasing
        tau = -1.0
        prev = math.inf
        m = 0
        while 2 * m + 1 < M:
            gamma = rho[2 * m] + rho[2 * m + 1]
            if gamma <= 0:
                break
            gamma = min(gamma, prev)
            tau += 2.0 * gamma
            prev = gamma
            m += 1
        tau = max(tau, 1e-12)
        ess = min(ess, M / tau)
    return float(ess)


def split_rhat(chains: np.ndarray) -> float:
    """Split-chain potential scale reduction; chains shaped (C, M, d)."""
    chains = np.asarray(chains, dtype=float)
    if chains.ndim == 2:
        chains = chains[None, :, :]
    C, M, d = chains.shape
    half = M // 2
    if half < 2:
        return float("nan")
    segs = np.concatenate([chains[:, :half, :], chains[:, half:2 * half, :]],
                          axis=0)  # (2C, half, d)
    worst = 1.0
    for k in range(d):
        x = segs[:, :, k]
        within = x.var(axis=1, ddof=1).mean()
        between = half * x.mean(axis=1).var(ddof=1)
        if within <= 0:
            rhat = 1.0 if between <= 0 else math.inf
        else:
            var_plus = (half - 1) / half * within + between / half
            rhat = math.sqrt(var_plus / within)
        worst = max(worst, rhat)
    return float(worst)


def cross_chain_rhat(chains: list[ParameterChain]) -> float:
    lengths = {len(c) for c in chains}
    if len(lengths) != 1:
        raise DiagnosticError("replicate chains have unequal lengths")
    stacked = np.stack([c.samples for c in chains], axis=0)
    return split_rhat(stacked)
