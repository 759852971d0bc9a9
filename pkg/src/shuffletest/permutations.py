"""Permutations, sufficient statistics, and shuffle-scheme simulators.

Permutations are stored as 1-based image vectors: row ``p`` represents the
bijection sigma with ``sigma(i) = p[i-1]``.  Datasets are (N, n) int arrays,
one permutation per row.  All statistic evaluators are vectorized over rows.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from .exceptions import ValidationError
from .validation import check_count, check_permutation_array, check_seed

PERM_FILE_MAGIC = "# shuffletest permutation sample v1"


class DataSummary(NamedTuple):
    """Sufficient summary of a dataset: size N and the statistic sum.

    Exponential-family inference only touches data through (N, sum of T), so
    a histogram of statistic values carries as much information as the raw
    permutations.
    """

    N: int
    stat_sum: np.ndarray

    @classmethod
    def from_histogram(cls, values, counts) -> "DataSummary":
        values = np.asarray(values, dtype=float)
        counts = np.asarray(counts, dtype=np.int64)
        if values.shape != counts.shape or values.ndim != 1:
            raise ValidationError("histogram values/counts must be 1-d and "
                                  "equal length")
        if np.any(counts < 0):
            raise ValidationError("histogram counts must be nonnegative")
        return cls(int(counts.sum()), np.array([float(values @ counts)]))


def summarize(data, statistic) -> DataSummary:
    T = statistic.evaluate(data)
    return DataSummary(T.shape[0], T.sum(axis=0))


def identity(n: int) -> np.ndarray:
    check_count(n, "n", minimum=1)
    return np.arange(1, n + 1, dtype=np.int64)


# --------------------------------------------------------------------------
# statistics
# --------------------------------------------------------------------------

def fixed_points(perms) -> np.ndarray:
    """Number of fixed points F(sigma) = #{i : sigma(i) = i} per row.

    Always in 0..n and never n-1 (a permutation cannot fix all but one point).
    """
    X = check_permutation_array(perms)
    return (X == np.arange(1, X.shape[1] + 1)).sum(axis=1)


def adjacent_pairs(perms) -> np.ndarray:
    """Count of i with sigma(i+1) = sigma(i) + 1; the identity scores n-1."""
    X = check_permutation_array(perms)
    if X.shape[1] < 2:
        raise ValidationError("adjacent_pairs requires n >= 2")
    return (X[:, 1:] == X[:, :-1] + 1).sum(axis=1)


def position_of_card(perms, card: int) -> np.ndarray:
    """Position i with sigma(i) = card, i.e. sigma^{-1}(card), 1-based."""
    X = check_permutation_array(perms)
    n = X.shape[1]
    if not 1 <= card <= n:
        raise ValidationError(f"card must be in 1..{n}, got {card}")
    return (X == card).argmax(axis=1) + 1


def top_card_position(perms) -> np.ndarray:
    return position_of_card(perms, 1)


def bottom_card_position(perms) -> np.ndarray:
    X = check_permutation_array(perms)
    return position_of_card(X, X.shape[1])


def _wash_triple(perms) -> np.ndarray:
    X = check_permutation_array(perms)
    return np.column_stack([adjacent_pairs(X), top_card_position(X),
                            bottom_card_position(X)])


@dataclass(frozen=True)
class StatisticSpec:
    """A named sufficient statistic T: S_n -> R^d with metadata.

    value_support holds, per coordinate, the sorted attainable values (used
    for conjugate-prior hull checks).  exact_counts marks statistics whose
    level-set counts #{sigma : T=t} have a closed form (only fixed points).
    """

    name: str
    n: int
    dimension: int
    evaluator: Callable[[np.ndarray], np.ndarray]
    value_support: tuple = ()
    exact_counts: bool = False
    uniform_mean: tuple = ()  # exact E[T] under the uniform law, when known

    def evaluate(self, perms) -> np.ndarray:
        """Return T over a dataset as an (N, d) float array."""
        X = check_permutation_array(perms, n=self.n)
        out = np.asarray(self.evaluator(X), dtype=float)
        if out.ndim == 1:
            out = out[:, None]
        if out.shape != (X.shape[0], self.dimension):
            raise ValidationError(
                f"statistic {self.name} returned shape {out.shape}, "
                f"expected {(X.shape[0], self.dimension)}")
        return out

    def evaluate_one(self, perm) -> np.ndarray:
        return self.evaluate(np.asarray(perm)[None, :])[0]

    def support_hull(self) -> list[tuple[float, float]]:
        """Per-coordinate [min, max] of the attainable values."""
        if not self.value_support:
            raise ValidationError(
                f"statistic {self.name} declares no value support")
        return [(float(v[0]), float(v[-1])) for v in self.value_support]


def _fixed_points_support(n):
    # every count except n-1 is attainable
    vals = [j for j in range(n + 1) if j != n - 1]
    return (np.array(vals),)


_STATISTIC_FACTORIES: dict[str, Callable[[int], StatisticSpec]] = {
    # uniform means: E[F]=1; E[adjacent]=(n-1)/n; positions are uniform on 1..n
    "fixed_points": lambda n: StatisticSpec(
        "fixed_points", n, 1, fixed_points,
        value_support=_fixed_points_support(n), exact_counts=True,
        uniform_mean=(1.0,)),
    "adjacent_pairs": lambda n: StatisticSpec(
        "adjacent_pairs", n, 1, adjacent_pairs,
        value_support=(np.arange(n),), uniform_mean=((n - 1) / n,)),
    "top_card": lambda n: StatisticSpec(
        "top_card", n, 1, top_card_position,
        value_support=(np.arange(1, n + 1),), uniform_mean=((n + 1) / 2,)),
    "bottom_card": lambda n: StatisticSpec(
        "bottom_card", n, 1, bottom_card_position,
        value_support=(np.arange(1, n + 1),), uniform_mean=((n + 1) / 2,)),
    "wash_triple": lambda n: StatisticSpec(
        "wash_triple", n, 3, _wash_triple,
        value_support=(np.arange(n), np.arange(1, n + 1),
                       np.arange(1, n + 1)),
        uniform_mean=((n - 1) / n, (n + 1) / 2, (n + 1) / 2)),
}


def statistic_names() -> list[str]:
    return sorted(_STATISTIC_FACTORIES)


def get_statistic(name: str, n: int) -> StatisticSpec:
    key = name.replace("-", "_")
    if key not in _STATISTIC_FACTORIES:
        raise ValidationError(
            f"unknown statistic {name!r}; choose from {statistic_names()}")
    check_count(n, "n", minimum=1)
    if key in ("adjacent_pairs", "wash_triple") and n < 2:
        raise ValidationError(f"statistic {name!r} requires n >= 2")
    return _STATISTIC_FACTORIES[key](n)


# --------------------------------------------------------------------------
# shuffle schemes
# --------------------------------------------------------------------------

SCHEME_KINDS = ("random_transpositions", "uniform", "smoosh_placeholder")


@dataclass(frozen=True)
class ShuffleScheme:
    """How a single sample permutation is produced.

    random_transpositions: from the identity, repeat ``steps`` times: pick
    L, R independently uniform in 1..n and swap positions L and R.  L = R is
    allowed, so a single step is exactly the walk with Q(Id) = 1/n and
    Q(transposition) = 2/n^2.  uniform: one Fisher-Yates shuffle (steps is
    ignored).  smoosh_placeholder: physical shuffles exist only as ingested
    data files and cannot be simulated.
    """

    kind: str
    n: int
    steps: int = 0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in SCHEME_KINDS:
            raise ValidationError(
                f"unknown scheme kind {self.kind!r}; choose from {SCHEME_KINDS}")
        check_count(self.n, "n", minimum=1)
        if self.kind == "random_transpositions":
            check_count(self.steps, "steps", minimum=0)
        check_seed(self.seed)


def apply_shuffle(scheme: ShuffleScheme, rng: np.random.Generator) -> np.ndarray:
    """Draw one permutation from the scheme using the supplied generator."""
    n = scheme.n
    if scheme.kind == "uniform":
        return rng.permutation(n).astype(np.int64) + 1
    if scheme.kind == "random_transpositions":
        perm = np.arange(1, n + 1, dtype=np.int64)
        if scheme.steps:
            LR = rng.integers(0, n, size=(scheme.steps, 2))
            for L, R in LR:
                perm[L], perm[R] = perm[R], perm[L]
        return perm
    raise ValidationError(
        f"scheme kind {scheme.kind!r} cannot be simulated; ingest a data file")


def _sample_rng(seed: int, index: int) -> np.random.Generator:
    # per-sample stream: hash of (master seed, sample index); independent of
    # generation order and thread layout
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(index,))
    return np.random.Generator(np.random.PCG64(ss))


def sample_dataset(scheme: ShuffleScheme, N: int, seed: int | None = None) -> np.ndarray:
    """N independent draws from the scheme, each restarted from the identity.

    Reproducible: sample i uses its own stream derived from (seed, i), so the
    result does not depend on evaluation order.
    """
    N = check_count(N, "N", minimum=1)
    seed = scheme.seed if seed is None else check_seed(seed)
    n = scheme.n
    if scheme.kind == "uniform":
        out = np.empty((N, n), dtype=np.int64)
        for i in range(N):
            out[i] = apply_shuffle(scheme, _sample_rng(seed, i))
        return out
    if scheme.kind != "random_transpositions":
        raise ValidationError(
            f"scheme kind {scheme.kind!r} cannot be simulated; ingest a data file")
    k = scheme.steps
    perms = np.tile(np.arange(1, n + 1, dtype=np.int64), (N, 1))
    if k == 0:
        return perms
    LR = np.empty((N, k, 2), dtype=np.int64)
    for i in range(N):
        LR[i] = _sample_rng(seed, i).integers(0, n, size=(k, 2))
    rows = np.arange(N)
    for step in range(k):
        L = LR[:, step, 0]
        R = LR[:, step, 1]
        tmp = perms[rows, L].copy()
        perms[rows, L] = perms[rows, R]
        perms[rows, R] = tmp
    return perms


# --------------------------------------------------------------------------
# file formats
# --------------------------------------------------------------------------

def write_perm_file(path, perms, scheme: ShuffleScheme | None = None,
                    seed: int | None = None) -> None:
    """Write a .perm file: one space-separated 1-based permutation per line.

    A header comment records n, scheme, k, N and seed so the file is
    self-describing.
    """
    X = check_permutation_array(perms)
    N, n = X.shape
    kind = scheme.kind if scheme is not None else "unknown"
    k = scheme.steps if scheme is not None else 0
    if seed is None:
        seed = scheme.seed if scheme is not None else 0
    lines = [PERM_FILE_MAGIC,
             f"# n={n} scheme={kind} k={k} N={N} seed={seed}"]
    lines.extend(" ".join(map(str, row)) for row in X)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def read_perm_file(path) -> tuple[np.ndarray, dict]:
    """Read a .perm file; returns (dataset, header metadata)."""
    meta: dict = {}
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line.lstrip("#").strip()
                for tok in body.split():
                    if "=" in tok:
                        key, _, val = tok.partition("=")
                        meta.setdefault(key, val)
                continue
            try:
                rows.append([int(t) for t in line.split()])
            except ValueError:
                raise ValidationError(
                    f"{path}: line {lineno} is not a permutation line") from None
    if not rows:
        raise ValidationError(f"{path}: no permutations found")
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise ValidationError(f"{path}: inconsistent permutation lengths {sorted(widths)}")
    X = check_permutation_array(np.array(rows, dtype=np.int64))
    for key in ("n", "k", "N", "seed"):
        if key in meta:
            try:
                meta[key] = int(meta[key])
            except ValueError:
                pass
    if "n" in meta and meta["n"] != X.shape[1]:
        raise ValidationError(
            f"{path}: header says n={meta['n']} but rows have length {X.shape[1]}")
    if "N" in meta and meta["N"] != X.shape[0]:
        raise ValidationError(
            f"{path}: header says N={meta['N']} but file has {X.shape[0]} rows")
    return X, meta


def read_histogram_csv(path) -> tuple[np.ndarray, np.ndarray]:
    """Read a "value,count" CSV (optional header); returns (values, counts)."""
    values, counts = [], []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = [p.strip() for p in line.split(",")]
            if len(parts) != 2:
                raise ValidationError(f"{path}: line {lineno}: expected 'value,count'")
            if lineno == 1 and not parts[0].lstrip("-").isdigit():
                continue  # header row
            try:
                values.append(int(parts[0]))
                counts.append(int(parts[1]))
            except ValueError:
                raise ValidationError(
                    f"{path}: line {lineno}: expected integers, got {line!r}") from None
    if not values:
        raise ValidationError(f"{path}: no histogram rows found")
    order = np.argsort(values)
    return np.asarray(values)[order], np.asarray(counts)[order]


REFERENCE_STEP_COUNTS = (100, 120, 140, 160, 180, 200)


def _data_path(name: str):
    from importlib.resources import files

    return files("shuffletest") / "data" / name


def load_reference_dataset(steps: int) -> tuple[np.ndarray, dict]:
    """Load a bundled random-transposition dataset (n=52, N=200, seed 19).

    ``steps`` must be one of REFERENCE_STEP_COUNTS.
    """
    if steps not in REFERENCE_STEP_COUNTS:
        raise ValidationError(
            f"no bundled dataset for k={steps}; choose from {REFERENCE_STEP_COUNTS}")
    return read_perm_file(str(_data_path(f"rt_n52_k{steps}_seed19.perm")))


def load_smoosh_histogram() -> tuple[np.ndarray, np.ndarray]:
    """Fixed-point histogram of 52 smoosh shuffles (values, counts)."""
    return read_histogram_csv(str(_data_path("smoosh_t30.csv")))
