from __future__ import annotations

from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ..batch import GeoBatch
from ..exceptions import InputError
from ..validation import check_region_ids
from .clients import HashingTextEmbedder
from .mechanisms import Mechanism, RetrievalConfig, retrieve_many


class ContextRetriever(TransformerMixin, BaseEstimator):
    """Turn target region ids into a :class:`GeoBatch` of retrieved context.

    ``X`` passed to :meth:`transform` is a column of region ids. Retrieval is
    label-free, so :meth:`fit` only checks the configuration.

    >>> from sklearn.pipeline import make_pipeline
    >>> pipe = make_pipeline(ContextRetriever(db, task=task, client=llm),  # doctest: +SKIP
    ...                      GeoTransformerRegressor())
    """

    def __init__(self, database=None, task=None, mechanism="task_aware", k=24, n=8,
                 lasso_lambda=0.01, seed=0, client=None, embedder=None, max_in_flight=4):
        self.database = database
        self.task = task
        self.mechanism = mechanism
        self.k = k
        self.n = n
        self.lasso_lambda = lasso_lambda
        self.seed = seed
        self.client = client
        self.embedder = embedder
        self.max_in_flight = max_in_flight

    def fit(self, X=None, y=None):
        if self.database is None:
            raise InputError("ContextRetriever needs a region database")
        self.config_ = RetrievalConfig(k=self.k, n=self.n, mechanism=self.mechanism,
                                       lasso_lambda=self.lasso_lambda, seed=self.seed)
        if self.config_.mechanism is Mechanism.TASK_AWARE:
            if self.task is None or self.client is None:
                raise InputError("task-aware retrieval needs `task` and `client`")
        self.embedder_ = self.embedder if self.embedder is not None else HashingTextEmbedder()
        self.n_features_in_ = 1
        return self

    def retrieve(self, X):
        """The raw :class:`ContextSet` list, aligned with ``X``."""
        check_is_fitted(self, "config_")
        ids = check_region_ids(X)
        return retrieve_many(self.database, ids.tolist(), self.config_, self.task, self.client,
                             self.embedder_, self.max_in_flight)

    def transform(self, X) -> GeoBatch:
        return GeoBatch.from_contexts(self.database, self.retrieve(X))
