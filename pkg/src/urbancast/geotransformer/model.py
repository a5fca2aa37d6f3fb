"""Batched GeoTransformer forward pass and its exact reverse-mode gradients.

Shapes: N samples, m value slots, D model width, h heads, d_k / d_v head
widths. Values ``V`` are ``(N, m, D)``, slot 0 being the target embedding,
which is also the initial query state.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..exceptions import DimensionError, InputError, NonFiniteForwardError
from .attention import GeoContext, multi_head_layer
from .config import AttentionConfig, Block
from .params import LayerParams, ModelParams, check_shapes
from .weights import prior_weights

LN_EPS = 1e-5


def mse_loss(predictions, labels) -> float:
    p = np.asarray(predictions, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if p.shape != y.shape:
        raise DimensionError(f"predictions {p.shape} vs labels {y.shape}")
    if p.size == 0:
        raise InputError("mse of an empty batch is undefined")
    return float(np.mean((p - y) ** 2))


# -- single sample -------------------------------------------------------------


def _layer_norm(x, gain, bias):
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + LN_EPS)
    xhat = xc * inv
    return xhat * gain + bias, (xhat, inv)


def forward(model: ModelParams, target_embedding, context, cfg: AttentionConfig) -> float:
    """Prediction for one target. ``context`` is a ContextSet or a GeoContext.

    The returned value is in label units (training-time standardization undone).
    """
    geo = context if isinstance(context, GeoContext) else \
        GeoContext.from_context(target_embedding, context)
    if geo.slots != cfg.context_slots:
        raise DimensionError(
            f"context has {geo.slots} slots (target + {geo.slots - 1}), "
            f"model expects {cfg.context_slots}"
        )
    x = np.asarray(target_embedding, dtype=np.float64)
    for i, lp in enumerate(model.layers):
        if cfg.block is Block.RESIDUAL:
            x = x + multi_head_layer(x, geo, lp, cfg)
        else:
            h1, _ = _layer_norm(x, lp.ln1_gain, lp.ln1_bias)
            x = x + multi_head_layer(h1, geo, lp, cfg)
            h2, _ = _layer_norm(x, lp.ln2_gain, lp.ln2_bias)
            x = x + np.maximum(h2 @ lp.ffn_in + lp.ffn_in_bias, 0.0) @ lp.ffn_out + lp.ffn_out_bias
        if not np.all(np.isfinite(x)):
            raise NonFiniteForwardError(f"layer {i}")
    y = float(x @ model.head_weights + model.head_bias)
    return y * model.label_std + model.label_mean


# -- batched -----------------------------------------------------------------


@dataclass
class _AttnCache:
    x_in: np.ndarray
    q: np.ndarray      # (N, h, d_k)
    kh: np.ndarray     # (h, m, d_k)
    a: np.ndarray      # (N, h, m) softmax
    w: np.ndarray      # (N, h, m) after prior
    wv: np.ndarray     # (N, h, D) weighted value sums before W_V
    concat: np.ndarray  # (N, h*d_v)


@dataclass
class _LayerCache:
    attn: _AttnCache
    values: np.ndarray  # exactly the array handed to this layer as values
    ln1: tuple | None = None
    ln2: tuple | None = None
    ffn_pre: np.ndarray | None = None
    ffn_hidden: np.ndarray | None = None
    h2: np.ndarray | None = None


@dataclass
class ForwardCache:
    weights: np.ndarray | None
    layers: list[_LayerCache] = field(default_factory=list)
    final_state: np.ndarray | None = None

    @property
    def layer_values(self):
        return [lc.values for lc in self.layers]

    @property
    def attention(self):
        """Per-layer pre-prior softmax scores, each ``(N, h, m)``."""
        return [lc.attn.a for lc in self.layers]


def _attn_forward(x, values, weights, lp: LayerParams, cfg: AttentionConfig):
    scale = 1.0 / np.sqrt(cfg.d_k)
    q = np.einsum("nd,hdk->nhk", x, lp.w_query)
    kh = np.einsum("md,hdk->hmk", lp.key_base, lp.w_key)
    s = np.einsum("nhk,hmk->nhm", q, kh) * scale
    s = s - s.max(axis=-1, keepdims=True)
    e = np.exp(s)
    a = e / e.sum(axis=-1, keepdims=True)
    if weights is None:
        w = a
    else:
        w = weights[:, None, :] * a
        if cfg.renormalize:
            w = w / w.sum(axis=-1, keepdims=True)
    wv = np.einsum("nhm,nmd->nhd", w, values)
    heads = np.einsum("nhd,hdv->nhv", wv, lp.w_value)
    concat = heads.reshape(len(x), cfg.heads * cfg.d_v)
    return concat @ lp.w_out, _AttnCache(x, q, kh, a, w, wv, concat)


def _attn_backward(gy, values, weights, lp: LayerParams, c: _AttnCache, cfg, g: LayerParams):
    """Accumulate parameter gradients into ``g``; return dL/dx_in."""
    scale = 1.0 / np.sqrt(cfg.d_k)
    n = len(gy)
    g.w_out += c.concat.T @ gy
    gheads = (gy @ lp.w_out.T).reshape(n, cfg.heads, cfg.d_v)
    g.w_value += np.einsum("nhd,nhv->hdv", c.wv, gheads)
    gwv = np.einsum("nhv,hdv->nhd", gheads, lp.w_value)
    gw = np.einsum("nhd,nmd->nhm", gwv, values)
    if weights is None:
        ga = gw
    elif cfg.renormalize:
        u = weights[:, None, :] * c.a
        total = u.sum(axis=-1, keepdims=True)
        gu = (gw - (gw * c.w).sum(axis=-1, keepdims=True)) / total
        ga = gu * weights[:, None, :]
    else:
        ga = gw * weights[:, None, :]
    gs = c.a * (ga - (ga * c.a).sum(axis=-1, keepdims=True)) * scale
    gq = np.einsum("nhm,hmk->nhk", gs, c.kh)
    gkh = np.einsum("nhm,nhk->hmk", gs, c.q)
    g.w_query += np.einsum("nd,nhk->hdk", c.x_in, gq)
    g.key_base += np.einsum("hmk,hdk->md", gkh, lp.w_key)
    g.w_key += np.einsum("md,hmk->hdk", lp.key_base, gkh)
    return np.einsum("nhk,hdk->nd", gq, lp.w_query)


def _ln_backward(gout, gain, cache, g_gain, g_bias):
    xhat, inv = cache
    g_gain += (gout * xhat).sum(axis=0)
    g_bias += gout.sum(axis=0)
    gxhat = gout * gain
    return inv * (gxhat - gxhat.mean(axis=-1, keepdims=True)
                  - xhat * (gxhat * xhat).mean(axis=-1, keepdims=True))


def forward_batch(model: ModelParams, values, weights, cfg: AttentionConfig):
    """Standardized-scale predictions ``(N,)`` plus the cache for backprop.

    ``weights`` is the ``(N, m)`` prior (``None`` for bypass).
    """
    x = values[:, 0, :]
    cache = ForwardCache(weights)
    for i, lp in enumerate(model.layers):
        if cfg.block is Block.RESIDUAL:
            y, ac = _attn_forward(x, values, weights, lp, cfg)
            lc = _LayerCache(ac, values)
            x = x + y
        else:
            h1, ln1 = _layer_norm(x, lp.ln1_gain, lp.ln1_bias)
            y, ac = _attn_forward(h1, values, weights, lp, cfg)
            x = x + y
            h2, ln2 = _layer_norm(x, lp.ln2_gain, lp.ln2_bias)
            pre = h2 @ lp.ffn_in + lp.ffn_in_bias
            hid = np.maximum(pre, 0.0)
            x = x + hid @ lp.ffn_out + lp.ffn_out_bias
            lc = _LayerCache(ac, values, ln1, ln2, pre, hid, h2)
        if not np.all(np.isfinite(x)):
            raise NonFiniteForwardError(f"layer {i}")
        cache.layers.append(lc)
    cache.final_state = x
    pred = x @ model.head_weights + model.head_bias
    if not np.all(np.isfinite(pred)):
        raise NonFiniteForwardError("prediction head")
    return pred, cache


def backward_batch(model: ModelParams, grad_pred, cache: ForwardCache, cfg) -> ModelParams:
    """Gradients of ``sum(grad_pred * pred)`` with respect to every parameter."""
    grads = model.zeros_like()
    grads.head_weights += cache.final_state.T @ grad_pred
    grads.head_bias += grad_pred.sum()
    gx = np.outer(grad_pred, model.head_weights)
    for lp, lc, g in zip(reversed(model.layers), reversed(cache.layers), reversed(grads.layers)):
        values = lc.values
        if cfg.block is Block.RESIDUAL:
            gx = gx + _attn_backward(gx, values, cache.weights, lp, lc.attn, cfg, g)
            continue
        # FFN sub-block
        g.ffn_out_bias += gx.sum(axis=0)
        g.ffn_out += lc.ffn_hidden.T @ gx
        gpre = (gx @ lp.ffn_out.T) * (lc.ffn_pre > 0)
        g.ffn_in_bias += gpre.sum(axis=0)
        g.ffn_in += lc.h2.T @ gpre
        gh2 = gpre @ lp.ffn_in.T
        gx = gx + _ln_backward(gh2, lp.ln2_gain, lc.ln2, g.ln2_gain, g.ln2_bias)
        # attention sub-block
        gh1 = _attn_backward(gx, values, cache.weights, lp, lc.attn, cfg, g)
        gx = gx + _ln_backward(gh1, lp.ln1_gain, lc.ln1, g.ln1_gain, g.ln1_bias)
    return grads


def batch_weights(batch, cfg: AttentionConfig):
    return prior_weights(batch.distances, batch.entropies, cfg.weighting, cfg.alpha)


def _standardized(model: ModelParams, labels):
    return (np.asarray(labels, dtype=np.float64) - model.label_mean) / model.label_std


def loss_and_gradients(model: ModelParams, batch, labels, cfg: AttentionConfig,
                       loss_scale: float = 1.0) -> tuple[float, ModelParams]:
    """Batch MSE (on the model's standardized label scale) and its exact gradient."""
    if len(batch) == 0:
        raise InputError("gradient of an empty batch is undefined")
    check_shapes(model, cfg)
    values = np.asarray(batch.values, dtype=np.float64)
    if values.shape[1:] != (cfg.context_slots, cfg.d_model):
        raise DimensionError(f"batch values {values.shape[1:]} do not match config")
    y = _standardized(model, labels)
    pred, cache = forward_batch(model, values, batch_weights(batch, cfg), cfg)
    resid = pred - y
    loss = loss_scale * float(np.mean(resid ** 2))
    grad_pred = loss_scale * 2.0 * resid / len(y)
    return loss, backward_batch(model, grad_pred, cache, cfg)


def gradients(model: ModelParams, batch, labels, cfg: AttentionConfig,
              loss_scale: float = 1.0) -> ModelParams:
    return loss_and_gradients(model, batch, labels, cfg, loss_scale)[1]


def batch_loss(model: ModelParams, batch, labels, cfg: AttentionConfig) -> float:
    pred, _ = forward_batch(model, np.asarray(batch.values, dtype=np.float64),
                            batch_weights(batch, cfg), cfg)
    return float(np.mean((pred - _standardized(model, labels)) ** 2))


def predict_batch(model: ModelParams, batch, cfg: AttentionConfig) -> np.ndarray:
    """Predictions in label units, one per batch row."""
    if len(batch) == 0:
        return np.zeros(0)
    values = np.asarray(batch.values, dtype=np.float64)
    if values.shape[1:] != (cfg.context_slots, cfg.d_model):
        raise DimensionError(f"batch values {values.shape[1:]} do not match config")
    pred, _ = forward_batch(model, values, batch_weights(batch, cfg), cfg)
    return pred * model.label_std + model.label_mean
