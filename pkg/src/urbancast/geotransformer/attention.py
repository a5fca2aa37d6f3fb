"""Single-sample geospatial attention.

These are the readable reference versions; :mod:`.model` holds the batched
forward/backward used for training, and the two are tested against each other.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..exceptions import DimensionError, InputError
from ..region_store import region_entropy
from .config import AttentionConfig
from .params import LayerParams
from .weights import prior_weights


@dataclass(frozen=True)
class GeoContext:
    """Value set for one target: slot 0 is the target, the rest its context."""

    distances: np.ndarray         # (m,), slot 0 == 0
    entropies: np.ndarray         # (m,)
    value_embeddings: np.ndarray  # (m, D)

    def __post_init__(self):
        m = len(self.distances)
        if self.entropies.shape != (m,) or self.value_embeddings.ndim != 2 \
                or len(self.value_embeddings) != m:
            raise DimensionError("GeoContext fields disagree on the number of slots")
        if m and self.distances[0] != 0:
            raise InputError("slot 0 (the target) must have distance 0")

    @property
    def slots(self) -> int:
        return len(self.distances)

    @classmethod
    def from_context(cls, target_embedding, context) -> "GeoContext":
        """Build from a target embedding plus a retrieval ContextSet."""
        z = np.asarray(target_embedding, dtype=np.float64)
        values = np.vstack([z[None, :], np.asarray(context.embeddings, dtype=np.float64)
                            .reshape(-1, z.size)])
        return cls(
            distances=np.concatenate([[0.0], np.asarray(context.distances, dtype=np.float64)]),
            entropies=np.concatenate([[region_entropy(z)],
                                      np.asarray(context.entropies, dtype=np.float64)]),
            value_embeddings=values,
        )

    def weights(self, cfg: AttentionConfig):
        return prior_weights(self.distances, self.entropies, cfg.weighting, cfg.alpha)


def softmax(x, axis=-1):
    x = np.asarray(x, dtype=np.float64)
    e = np.exp(x - x.max(axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


def geo_attention(query, keys, values, weights=None, *, renormalize=False) -> np.ndarray:
    """``sum_j weights_j * softmax(keys @ query / sqrt(d_k))_j * values_j``.

    ``weights=None`` skips the prior entirely (plain cross-attention).
    """
    q = np.asarray(query, dtype=np.float64)
    K = np.asarray(keys, dtype=np.float64)
    V = np.asarray(values, dtype=np.float64)
    if q.ndim != 1 or K.ndim != 2 or V.ndim != 2 or K.shape != (len(V), q.size):
        raise DimensionError(
            f"shapes do not agree: query {q.shape}, keys {K.shape}, values {V.shape}"
        )
    if not (np.all(np.isfinite(q)) and np.all(np.isfinite(K)) and np.all(np.isfinite(V))):
        raise InputError("attention inputs must be finite")
    a = softmax(K @ q / np.sqrt(q.size))
    if weights is not None:
        w = np.asarray(weights, dtype=np.float64)
        if w.shape != (len(V),):
            raise DimensionError(f"need {len(V)} weights, got shape {w.shape}")
        a = w * a
        if renormalize:
            a = a / a.sum()
    return a @ V


def multi_head_layer(query_state, geo: GeoContext, params: LayerParams,
                     cfg: AttentionConfig) -> np.ndarray:
    """Concatenated geo-attention heads projected back to ``d_model``.

    Values are always ``geo.value_embeddings`` and keys always
    ``params.key_base``, whatever the depth; only the query changes.
    """
    x = np.asarray(query_state, dtype=np.float64)
    if x.shape != (cfg.d_model,) or geo.value_embeddings.shape != (cfg.context_slots, cfg.d_model):
        raise DimensionError("query/value shapes do not match the attention config")
    w = geo.weights(cfg)
    heads = []
    for i in range(cfg.heads):
        heads.append(geo_attention(
            x @ params.w_query[i],
            params.key_base @ params.w_key[i],
            geo.value_embeddings @ params.w_value[i],
            w,
            renormalize=cfg.renormalize,
        ))
    return np.concatenate(heads) @ params.w_out
