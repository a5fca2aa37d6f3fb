"""Retrieval-augmented urban forecasting with geospatial attention."""

from .batch import GeoBatch
from .geotransformer import GeoTransformerRegressor, MLPBaselineRegressor
from .region_store import (
    GeoPoint,
    RegionDatabase,
    RegionRecord,
    euclidean_distance,
    knn,
    load_bundle,
    region_entropy,
    save_bundle,
    validate,
)
from .retrieval import ContextRetriever, RetrievalConfig, TaskSpec

__version__ = "0.1.0"
