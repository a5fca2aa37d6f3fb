"""Spatial-proximity and entropy priors applied to attention scores."""

from __future__ import annotations

from enum import Enum

import numpy as np

from ..exceptions import DimensionError, InputError

DEGENERATE_MAX = 1e-12


class Weighting(str, Enum):
    FULL = "full"                  # alpha * spatial + (1 - alpha) * entropy
    SPATIAL_ONLY = "spatial_only"  # entropy prior removed
    ENTROPY_ONLY = "entropy_only"  # spatial prior removed
    NONE = "none"                  # weights fixed at 1, still multiplied in
    BYPASS = "bypass"              # no weighting step at all: plain cross-attention


def _normalize_by_max(v: np.ndarray) -> np.ndarray:
    top = v.max(axis=-1, keepdims=True)
    flat = top < DEGENERATE_MAX
    out = v / np.where(flat, 1.0, top)
    return np.where(flat, 1.0, out)


def spatial_weights(distances) -> np.ndarray:
    """``1 - d_j / max(d)``; all ones when every distance is ~0.

    Works row-wise on ``(..., m)`` arrays.
    """
    d = np.asarray(distances, dtype=np.float64)
    if not np.all(np.isfinite(d)):
        raise InputError("distances must be finite")
    if np.any(d < 0):
        raise InputError("distances must be non-negative")
    top = d.max(axis=-1, keepdims=True)
    flat = top < DEGENERATE_MAX
    return np.where(flat, 1.0, 1.0 - d / np.where(flat, 1.0, top))


def entropy_weights(entropies) -> np.ndarray:
    """``H_j / max(H)``; all ones when every entropy is ~0."""
    h = np.asarray(entropies, dtype=np.float64)
    if not np.all(np.isfinite(h)):
        raise InputError("entropies must be finite")
    if np.any(h < 0):
        raise InputError("entropies must be non-negative")
    return _normalize_by_max(h)


def combined_weights(w_spatial, w_entropy, alpha) -> np.ndarray:
    ws = np.asarray(w_spatial, dtype=np.float64)
    we = np.asarray(w_entropy, dtype=np.float64)
    if ws.shape != we.shape:
        raise DimensionError(f"weight shapes differ: {ws.shape} vs {we.shape}")
    if not 0.0 <= alpha <= 1.0:
        raise InputError("alpha must lie in [0, 1]")
    if alpha == 1.0:
        return ws.copy()
    if alpha == 0.0:
        return we.copy()
    return alpha * ws + (1.0 - alpha) * we


def prior_weights(distances, entropies, weighting, alpha=0.5):
    """Per-slot multipliers for a weighting mode, or ``None`` for ``bypass``."""
    weighting = Weighting(weighting)
    if weighting is Weighting.BYPASS:
        return None
    d = np.asarray(distances, dtype=np.float64)
    if weighting is Weighting.NONE:
        return np.ones_like(d)
    if weighting is Weighting.SPATIAL_ONLY:
        return spatial_weights(d)
    if weighting is Weighting.ENTROPY_ONLY:
        return entropy_weights(entropies)
    return combined_weights(spatial_weights(d), entropy_weights(entropies), alpha)
