from __future__ import annotations

import numpy as np

from ..exceptions import InputError, NonFiniteForwardError, TrainingDivergedError
from .config import AttentionConfig, Optimizer, TrainConfig
from .model import batch_loss, loss_and_gradients
from .params import ModelParams, check_shapes, init_params


class SGD:
    def __init__(self, lr):
        self.lr = lr

    def step(self, params: dict, grads: dict):
        for name, p in params.items():
            p -= self.lr * grads[name]


class Adam:
    def __init__(self, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, params: dict, grads: dict):
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for name, p in params.items():
            g = grads[name]
            m = self.m.setdefault(name, np.zeros_like(p))
            v = self.v.setdefault(name, np.zeros_like(p))
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def make_optimizer(cfg: TrainConfig):
    if cfg.optimizer is Optimizer.SGD:
        return SGD(cfg.learning_rate)
    return Adam(cfg.learning_rate)


def label_stats(labels, standardize: bool) -> tuple[float, float]:
    if not standardize:
        return 0.0, 1.0
    y = np.asarray(labels, dtype=np.float64)
    std = float(y.std())
    return float(y.mean()), (std if std > 0 else 1.0)


def minibatches(n: int, batch_size: int | None, rng: np.random.Generator):
    if batch_size is None or batch_size >= n:
        yield np.arange(n)
        return
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size]


def train(model: ModelParams | None, batch, labels, train_cfg: TrainConfig,
          cfg: AttentionConfig) -> tuple[ModelParams, list[float]]:
    """Fit the decoder by minimizing MSE; returns a new model and per-epoch loss.

    ``model=None`` starts from :func:`init_params` seeded with
    ``train_cfg.seed``. The history holds the full-data training MSE after
    each epoch, on the standardized label scale when standardization is on.
    """
    labels = np.asarray(labels, dtype=np.float64)
    if len(batch) == 0:
        raise InputError("cannot train on an empty dataset")
    if len(labels) != len(batch):
        raise InputError(f"{len(batch)} samples but {len(labels)} labels")
    model = init_params(cfg, train_cfg.seed) if model is None else model.copy()
    check_shapes(model, cfg)
    model.label_mean, model.label_std = label_stats(labels, train_cfg.standardize_labels)

    rng = np.random.default_rng(train_cfg.seed)
    opt = make_optimizer(train_cfg)
    params = model.arrays()
    history = []
    for epoch in range(train_cfg.epochs):
        try:
            for idx in minibatches(len(batch), train_cfg.batch_size, rng):
                _, grads = loss_and_gradients(model, batch[idx], labels[idx], cfg)
                g = grads.arrays()
                if train_cfg.weight_decay:
                    for name, p in params.items():
                        g[name] = g[name] + train_cfg.weight_decay * p
                opt.step(params, g)
            loss = batch_loss(model, batch, labels, cfg)
        except NonFiniteForwardError as exc:
            raise TrainingDivergedError(epoch, float("nan")) from exc
        if not np.isfinite(loss):
            raise TrainingDivergedError(epoch, loss)
        history.append(loss)
    return model, history
