"""Input validation helpers shared by the solvers, audits and learners."""

from __future__ import annotations

import numbers

import numpy as np

SIMPLEX_ATOL = 1e-12


def check_probability_rows(array, name="array", atol=SIMPLEX_ATOL):
    """Return ``array`` as a float64 ndarray whose last axis holds distributions.

    Raises ``ValueError`` if any entry is negative or non-finite, or if a row
    does not sum to one within ``atol``.
    """
    arr = np.asarray(array, dtype=np.float64)
    if arr.ndim == 0:
        raise ValueError(f"{name} must have at least one dimension")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    if np.any(arr < 0.0):
        raise ValueError(f"{name} contains negative probabilities")
    sums = arr.sum(axis=-1)
    worst = float(np.max(np.abs(sums - 1.0))) if sums.size else 0.0
    if worst > atol:
        raise ValueError(f"{name} rows must sum to 1 (max deviation {worst:.3e})")
    return arr


def check_discount(gamma):
    if not isinstance(gamma, numbers.Real) or not (0.0 <= gamma < 1.0):
        raise ValueError(f"discount must lie in [0, 1), got {gamma!r}")
    return float(gamma)


def check_alpha(alpha, strictly_positive=False):
    if not isinstance(alpha, numbers.Real) or not np.isfinite(alpha):
        raise ValueError(f"temperature must be a finite real, got {alpha!r}")
    if strictly_positive and alpha <= 0.0:
        raise ValueError(f"temperature must be > 0, got {alpha!r}")
    if alpha < 0.0:
        raise ValueError(f"temperature must be >= 0, got {alpha!r}")
    return float(alpha)


def check_state(state, n_states):
    if not isinstance(state, numbers.Integral) or not (0 <= state < n_states):
        raise ValueError(f"state {state!r} out of range [0, {n_states})")
    return int(state)


def check_table(table, shape, name="table"):
    arr = np.asarray(table, dtype=np.float64)
    if arr.shape != tuple(shape):
        raise ValueError(f"{name} has shape {arr.shape}, expected {tuple(shape)}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def check_random_state(seed):
    """Turn ``seed`` into a ``np.random.Generator``."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)
