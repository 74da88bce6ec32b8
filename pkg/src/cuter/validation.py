"""Input validation helpers.

Small check_* utilities in the sklearn style: validate, coerce to float64
ndarrays, and raise informative errors. Symmetry checks are exact (as stored),
not tolerance-based, because every symmetric matrix in this package is
constructed symmetrically.
"""

from __future__ import annotations

import numbers

import numpy as np


def check_square_matrix(m, name="matrix"):
    """Coerce to a float64 square 2-D array with finite entries."""
    arr = np.asarray(m, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ValueError(f"{name} must be square 2-D, got shape {arr.shape}")
    if arr.size and not np.isfinite(arr).all():
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def check_symmetric(m, name="matrix"):
    """Coerce to float64 and require exact (as-stored) symmetry."""
    arr = check_square_matrix(m, name)
    if not np.array_equal(arr, arr.T):
        raise ValueError(f"{name} is not symmetric")
    return arr


def check_adjacency(m, name="adjacency"):
    """Symmetric, nonnegative, zero-diagonal adjacency matrix."""
    arr = check_symmetric(m, name)
    if arr.size and arr.min() < 0.0:
        raise ValueError(f"{name} has negative weights")
    if arr.size and np.any(np.diag(arr) != 0.0):
        raise ValueError(f"{name} must have a zero diagonal")
    return arr


def check_rng(rng):
    """Coerce an int seed / None / Generator into a numpy Generator."""
    if rng is None or isinstance(rng, numbers.Integral):
        return np.random.default_rng(rng)
    if isinstance(rng, np.random.Generator):
        return rng
    raise TypeError(f"expected seed or numpy Generator, got {type(rng).__name__}")


def split_seed(master, stream_id):
    """Derive an independent Generator for one named consumer of a master seed.

    ``stream_id`` is a small integer tag; the same (master, tag) pair always
    yields the same generator state.
    """
    return np.random.default_rng(np.random.SeedSequence([int(master), int(stream_id)]))


def symmetric_outer_scale(a, scale):
    """Return ``diag(scale) @ a @ diag(scale)`` with exact symmetry.

    Uses an explicit outer product so that entry (i, j) and entry (j, i) are
    computed by the same float operations.
    """
    return a * np.multiply.outer(scale, scale)
