"""scikit-learn wrappers around the decoders."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from ..validation import check_embedding_matrix, check_geo_batch, check_targets
from .config import AttentionConfig, TrainConfig
from .mlp import init_mlp, mlp_predict, train_mlp
from .model import predict_batch
from .training import train


class GeoTransformerRegressor(RegressorMixin, BaseEstimator):
    """Cross-attention decoder with spatial and entropy priors.

    ``X`` is a :class:`~urbancast.batch.GeoBatch`; ``d_model`` and the slot
    count are read from it at fit time.

    Fitted attributes: ``model_`` (ModelParams), ``config_``
    (AttentionConfig), ``history_`` (per-epoch training loss).
    """

    def __init__(self, heads=4, layers=2, d_k=None, d_v=None, alpha=0.5, weighting="full",
                 renormalize=False, block="residual", d_ff=None, learning_rate=1e-3,
                 epochs=200, batch_size=None, optimizer="adam", standardize_labels=True,
                 weight_decay=0.0, random_state=0):
        self.heads = heads
        self.layers = layers
        self.d_k = d_k
        self.d_v = d_v
        self.alpha = alpha
        self.weighting = weighting
        self.renormalize = renormalize
        self.block = block
        self.d_ff = d_ff
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.batch_size = batch_size
        self.optimizer = optimizer
        self.standardize_labels = standardize_labels
        self.weight_decay = weight_decay
        self.random_state = random_state

    def _attention_config(self, X) -> AttentionConfig:
        return AttentionConfig(
            d_model=X.dim, heads=self.heads, layers=self.layers, context_slots=X.slots,
            d_k=self.d_k, d_v=self.d_v, alpha=self.alpha, weighting=self.weighting,
            renormalize=self.renormalize, block=self.block, d_ff=self.d_ff,
        )

    def _train_config(self) -> TrainConfig:
        return TrainConfig(
            learning_rate=self.learning_rate, epochs=self.epochs, batch_size=self.batch_size,
            seed=self.random_state, optimizer=self.optimizer,
            standardize_labels=self.standardize_labels, weight_decay=self.weight_decay,
        )

    def fit(self, X, y):
        X = check_geo_batch(X)
        y = check_targets(y, len(X))
        self.config_ = self._attention_config(X)
        self.model_, self.history_ = train(None, X, y, self._train_config(), self.config_)
        self.n_features_in_ = X.dim
        return self

    def predict(self, X):
        check_is_fitted(self, "model_")
        X = check_geo_batch(X, dim=self.config_.d_model, slots=self.config_.context_slots)
        return predict_batch(self.model_, X, self.config_)


class MLPBaselineRegressor(RegressorMixin, BaseEstimator):
    """One- or two-hidden-layer ReLU network on the target embedding alone.

    Accepts either a GeoBatch (only slot 0 is used) or an ``(N, D)`` array.
    """

    def __init__(self, hidden_units=64, hidden_layers=1, learning_rate=1e-3, epochs=200,
                 batch_size=None, optimizer="adam", standardize_labels=True, weight_decay=0.0,
                 random_state=0):
        self.hidden_units = hidden_units
        self.hidden_layers = hidden_layers
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.batch_size = batch_size
        self.optimizer = optimizer
        self.standardize_labels = standardize_labels
        self.weight_decay = weight_decay
        self.random_state = random_state

    def fit(self, X, y):
        X = check_embedding_matrix(X)
        y = check_targets(y, len(X))
        cfg = TrainConfig(learning_rate=self.learning_rate, epochs=self.epochs,
                          batch_size=self.batch_size, seed=self.random_state,
                          optimizer=self.optimizer, standardize_labels=self.standardize_labels,
                          weight_decay=self.weight_decay)
        params = init_mlp(X.shape[1], self.hidden_units, self.hidden_layers, self.random_state)
        self.params_, self.history_ = train_mlp(params, X, y, cfg)
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "params_")
        X = check_embedding_matrix(X, dim=self.n_features_in_)
        if len(X) == 0:
            return np.zeros(0)
        return mlp_predict(self.params_, X)
