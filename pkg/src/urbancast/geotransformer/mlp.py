"""Fully connected baseline decoder: target embedding only, no context."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..exceptions import DimensionError, InputError, TrainingDivergedError
from .config import TrainConfig
from .training import label_stats, make_optimizer, minibatches


@dataclass
class MLPParams:
    hidden: list[tuple[np.ndarray, np.ndarray]]  # [(W (in, units), b (units,)), ...]
    out_weights: np.ndarray  # (units,)
    out_bias: np.ndarray     # 0-d
    label_mean: float = 0.0
    label_std: float = 1.0

    def arrays(self) -> dict[str, np.ndarray]:
        out = {}
        for i, (w, b) in enumerate(self.hidden):
            out[f"hidden.{i}.weight"] = w
            out[f"hidden.{i}.bias"] = b
        out["out_weights"] = self.out_weights
        out["out_bias"] = self.out_bias
        return out


def init_mlp(dim: int, units: int = 64, layers: int = 1, seed=0) -> MLPParams:
    if layers not in (1, 2):
        raise InputError("the baseline supports 1 or 2 hidden layers")
    rng = np.random.default_rng(seed)
    hidden, fan_in = [], dim
    for _ in range(layers):
        bound = 1.0 / np.sqrt(fan_in)
        hidden.append((rng.uniform(-bound, bound, (fan_in, units)),
                       rng.uniform(-bound, bound, units)))
        fan_in = units
    bound = 1.0 / np.sqrt(units)
    return MLPParams(hidden, rng.uniform(-bound, bound, units), np.array(rng.uniform(-bound, bound)))


def _forward(params: MLPParams, X: np.ndarray):
    acts = [X]
    pres = []
    h = X
    for w, b in params.hidden:
        if h.shape[-1] != w.shape[0]:
            raise DimensionError(f"input width {h.shape[-1]} does not match layer {w.shape}")
        pre = h @ w + b
        pres.append(pre)
        h = np.maximum(pre, 0.0)
        acts.append(h)
    return h @ params.out_weights + params.out_bias, acts, pres


def mlp_forward(params: MLPParams, target_embedding) -> float:
    """Raw (standardized-scale) output for one embedding."""
    x = np.asarray(target_embedding, dtype=np.float64)
    if x.ndim != 1:
        raise DimensionError("mlp_forward takes one embedding vector")
    return float(_forward(params, x[None, :])[0][0])


def mlp_predict(params: MLPParams, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    return _forward(params, X)[0] * params.label_std + params.label_mean


def mlp_loss_and_gradients(params: MLPParams, X, y):
    pred, acts, pres = _forward(params, X)
    resid = pred - y
    gpred = 2.0 * resid / len(y)
    grads = {"out_weights": acts[-1].T @ gpred, "out_bias": np.array(gpred.sum())}
    gh = np.outer(gpred, params.out_weights)
    for i in reversed(range(len(params.hidden))):
        gpre = gh * (pres[i] > 0)
        grads[f"hidden.{i}.weight"] = acts[i].T @ gpre
        grads[f"hidden.{i}.bias"] = gpre.sum(axis=0)
        gh = gpre @ params.hidden[i][0].T
    return float(np.mean(resid ** 2)), grads


def train_mlp(params: MLPParams, X, labels, train_cfg: TrainConfig):
    X = np.asarray(X, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    params.label_mean, params.label_std = label_stats(labels, train_cfg.standardize_labels)
    y = (labels - params.label_mean) / params.label_std
    rng = np.random.default_rng(train_cfg.seed)
    opt = make_optimizer(train_cfg)
    arrays = params.arrays()
    history = []
    for epoch in range(train_cfg.epochs):
        for idx in minibatches(len(X), train_cfg.batch_size, rng):
            _, g = mlp_loss_and_gradients(params, X[idx], y[idx])
            if train_cfg.weight_decay:
                g = {k: v + train_cfg.weight_decay * arrays[k] for k, v in g.items()}
            opt.step(arrays, g)
        loss = float(np.mean((_forward(params, X)[0] - y) ** 2))
        if not np.isfinite(loss):
            raise TrainingDivergedError(epoch, loss)
        history.append(loss)
    return params, history
