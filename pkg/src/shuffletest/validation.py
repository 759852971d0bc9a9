"""Input validation helpers shared by the estimators, CLI and core functions."""

from __future__ import annotations

import numpy as np

from .exceptions import ValidationError


def check_permutation_array(X, n: int | None = None) -> np.ndarray:
    """Validate and return an (N, n) int64 array of 1-based permutations.

    Accepts a single permutation (1-D) or a stack of them (2-D).  Every row
    must be a bijection of {1..n}.
    """
    X = np.asarray(X)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2:
        raise ValidationError(f"expected a 1-D or 2-D array, got ndim={X.ndim}")
    if X.shape[0] == 0 or X.shape[1] == 0:
        raise ValidationError("empty permutation array")
    if not np.issubdtype(X.dtype, np.integer):
        Xf = X
        X = X.astype(np.int64)
        if not np.array_equal(X, Xf):
            raise ValidationError("permutation entries must be integers")
    X = X.astype(np.int64, copy=False)
    m = X.shape[1]
    if n is not None and m != n:
        raise ValidationError(f"expected permutations of {n} items, got {m}")
    expected = np.arange(1, m + 1)
    if not np.array_equal(np.sort(X, axis=1), np.broadcast_to(expected, X.shape)):
        bad = int(np.flatnonzero(
            ~(np.sort(X, axis=1) == expected).all(axis=1))[0])
        raise ValidationError(f"row {bad} is not a permutation of 1..{m}")
    return X


def check_count(value, name: str, minimum: int = 0) -> int:
    try:
        v = int(value)
    except (TypeError, ValueError):
        raise ValidationError(f"{name} must be an integer, got {value!r}") from None
    if v != value or v < minimum:
        raise ValidationError(f"{name} must be an integer >= {minimum}, got {value!r}")
    return v


def check_positive_real(value, name: str) -> float:
    v = float(value)
    if not np.isfinite(v) or v <= 0:
        raise ValidationError(f"{name} must be a positive finite real, got {value!r}")
    return v


def check_seed(seed) -> int:
    """Seeds are 64-bit nonnegative integers (entropy for SeedSequence)."""
    if seed is None:
        return 0
    s = check_count(seed, "seed", minimum=0)
    if s >= 2**64:
        raise ValidationError(f"seed must fit in 64 bits, got {seed!r}")
    return s
