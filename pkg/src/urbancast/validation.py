"""Input validation helpers shared by the estimators."""

from __future__ import annotations

import numpy as np

from .batch import GeoBatch
from .exceptions import DimensionError, InputError


def check_region_ids(X) -> np.ndarray:
    """Accept ids as a 1-d sequence or an ``(N, 1)`` column; return int64 1-d."""
    arr = np.asarray(X)
    if arr.ndim == 2 and arr.shape[1] == 1:
        arr = arr[:, 0]
    if arr.ndim != 1:
        raise DimensionError(f"expected region ids as (N,) or (N, 1), got shape {arr.shape}")
    if arr.size and not np.all(np.equal(np.mod(arr, 1), 0)):
        raise InputError("region ids must be integers")
    return arr.astype(np.int64)


def check_geo_batch(X, *, dim=None, slots=None) -> GeoBatch:
    if not isinstance(X, GeoBatch):
        raise InputError(
            f"expected a GeoBatch (from ContextRetriever.transform), got {type(X).__name__}"
        )
    if dim is not None and X.dim != dim:
        raise DimensionError(f"batch has embedding dim {X.dim}, model expects {dim}")
    if slots is not None and X.slots != slots:
        raise DimensionError(f"batch has {X.slots} value slots, model expects {slots}")
    for name in ("values", "distances", "entropies"):
        if not np.all(np.isfinite(getattr(X, name))):
            raise InputError(f"GeoBatch.{name} contains non-finite entries")
    if np.any(X.distances < 0):
        raise InputError("negative distance in GeoBatch")
    if np.any(X.entropies < 0):
        raise InputError("negative entropy in GeoBatch")
    return X


def check_targets(y, n_samples: int) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64)
    if y.ndim == 2 and y.shape[1] == 1:
        y = y[:, 0]
    if y.ndim != 1 or len(y) != n_samples:
        raise DimensionError(f"expected {n_samples} labels, got shape {y.shape}")
    if not np.all(np.isfinite(y)):
        raise InputError("labels must be finite")
    return y


def check_embedding_matrix(X, dim=None) -> np.ndarray:
    """Decoder input given either as a GeoBatch (slot 0 used) or an (N, D) array."""
    if isinstance(X, GeoBatch):
        X = X.targets
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise DimensionError(f"expected a 2-d (N, D) array, got shape {X.shape}")
    if dim is not None and X.shape[1] != dim:
        raise DimensionError(f"expected {dim} features, got {X.shape[1]}")
    if not np.all(np.isfinite(X)):
        raise InputError("input contains non-finite values")
    return X
