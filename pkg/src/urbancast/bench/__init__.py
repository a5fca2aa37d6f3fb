"""Synthetic-city benchmark: generation, planted labels, metrics, ablations."""

from .city import (
    DEFAULT_CATEGORIES,
    CategorySpec,
    CityLayout,
    SyntheticCityConfig,
    generate_city,
)
from .experiment import (
    RETRIEVAL_SUITE,
    WEIGHTING_SUITE,
    DecoderConfig,
    ExperimentConfig,
    MetricsReport,
    ablate_retrieval,
    ablate_weighting,
    build_inputs,
    run_experiment,
    summarize,
    write_reports,
)
from .metrics import RegressionMetrics, metrics, retrieval_precision
from .tasks import LabeledDataset, PlantedTask, plant_labels, split
