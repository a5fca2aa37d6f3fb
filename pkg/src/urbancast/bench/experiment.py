"""End-to-end experiment harness and the two ablation suites."""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from ..batch import GeoBatch
from ..exceptions import InputError
from ..geotransformer import GeoTransformerRegressor, MLPBaselineRegressor
from ..geotransformer.config import TrainConfig
from ..retrieval import (
    HashingTextEmbedder,
    Mechanism,
    MockLanguageModelClient,
    RetrievalConfig,
    retrieve_many,
)
from .city import SyntheticCityConfig, generate_city
from .metrics import RegressionMetrics, metrics, retrieval_precision
from .tasks import TEST, TRAIN, PlantedTask, plant_labels, split


@dataclass(frozen=True)
class DecoderConfig:
    kind: str = "geotransformer"  # or "mlp"
    heads: int = 1
    layers: int = 2
    alpha: float = 0.5
    weighting: str = "full"
    renormalize: bool = False
    block: str = "residual"
    hidden_units: int = 64

    def estimator(self, train: TrainConfig):
        common = dict(learning_rate=train.learning_rate, epochs=train.epochs,
                      batch_size=train.batch_size, optimizer=train.optimizer.value,
                      standardize_labels=train.standardize_labels,
                      weight_decay=train.weight_decay, random_state=train.seed)
        if self.kind == "mlp":
            return MLPBaselineRegressor(hidden_units=self.hidden_units,
                                        hidden_layers=self.layers, **common)
        if self.kind != "geotransformer":
            raise InputError(f"unknown decoder kind {self.kind!r}")
        return GeoTransformerRegressor(heads=self.heads, layers=self.layers, alpha=self.alpha,
                                       weighting=self.weighting, renormalize=self.renormalize,
                                       block=self.block, **common)


def default_train_config() -> TrainConfig:
    return TrainConfig(learning_rate=3e-3, epochs=300, weight_decay=0.01)


@dataclass(frozen=True)
class ExperimentConfig:
    city: SyntheticCityConfig = field(default_factory=SyntheticCityConfig)
    task: PlantedTask = field(default_factory=PlantedTask)
    retrieval: RetrievalConfig = field(default_factory=lambda: RetrievalConfig(k=24, n=8))
    decoder: DecoderConfig = field(default_factory=DecoderConfig)
    train: TrainConfig = field(default_factory=default_train_config)
    split_fraction: float = 0.8
    seed: int = 0  # label noise and split

    def with_seed(self, seed: int) -> "ExperimentConfig":
        """Derive every seed in the bundle from one integer."""
        return replace(
            self,
            city=self.city.with_seed(seed),
            retrieval=replace(self.retrieval, seed=seed),
            train=replace(self.train, seed=seed),
            seed=seed,
        )

    def descriptor(self) -> dict:
        return {
            "mechanism": self.retrieval.mechanism.value,
            "weighting": self.decoder.weighting,
            "decoder": self.decoder.kind,
            "seed": self.seed,
            "k": self.retrieval.k,
            "n": self.retrieval.n,
            "alpha": self.decoder.alpha,
        }


@dataclass(frozen=True)
class MetricsReport:
    train: RegressionMetrics
    test: RegressionMetrics
    descriptor: dict
    retrieval_precision: float
    data_hash: str

    def to_json(self) -> dict:
        return {
            "descriptor": self.descriptor,
            "train": self.train.to_json(),
            "test": self.test.to_json(),
            "retrieval_precision": self.retrieval_precision,
            "data_hash": self.data_hash,
        }

    def row(self) -> dict:
        return {
            **self.descriptor,
            "train_mse": self.train.mse, "train_mae": self.train.mae, "train_r2": self.train.r2,
            "test_mse": self.test.mse, "test_mae": self.test.mae, "test_r2": self.test.r2,
            "retrieval_precision": self.retrieval_precision,
            "data_hash": self.data_hash,
        }


def data_hash(db, dataset) -> str:
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(db.embeddings).tobytes())
    h.update(np.ascontiguousarray(db.centroids).tobytes())
    h.update(np.ascontiguousarray(dataset.labels).tobytes())
    h.update(json.dumps(sorted(dataset.split.items())).encode())
    return h.hexdigest()[:16]


def build_inputs(cfg: ExperimentConfig):
    db, layout = generate_city(cfg.city)
    dataset = split(plant_labels(db, layout, cfg.task, cfg.seed), cfg.split_fraction, cfg.seed)
    return db, layout, dataset


def mock_client(task: PlantedTask) -> MockLanguageModelClient:
    return MockLanguageModelClient({task.task_text: task.prototype, task.name: task.prototype})


def run_experiment(cfg: ExperimentConfig, client=None, embedder=None) -> MetricsReport:
    """generate -> plant -> split -> retrieve -> train -> evaluate; deterministic per seed."""
    if cfg.decoder.kind == "geotransformer" and cfg.retrieval.n < 1:
        raise InputError("the decoder needs at least one retrieved region")
    db, _, dataset = build_inputs(cfg)
    client = client or mock_client(cfg.task)
    embedder = embedder or HashingTextEmbedder()
    ids = dataset.ids.tolist()
    contexts = retrieve_many(db, ids, cfg.retrieval, cfg.task.spec, client, embedder,
                             max_in_flight=1)
    batch = GeoBatch.from_contexts(db, contexts)
    labels = dataset.labels_for(batch.target_ids)
    is_train = np.array([dataset.split[i] == TRAIN for i in batch.target_ids.tolist()])

    est = cfg.decoder.estimator(cfg.train)
    est.fit(batch[is_train], labels[is_train])
    train_m = metrics(est.predict(batch[is_train]), labels[is_train])
    test_m = metrics(est.predict(batch[~is_train]), labels[~is_train])
    return MetricsReport(train_m, test_m, cfg.descriptor(),
                         retrieval_precision(contexts, dataset.relevant), data_hash(db, dataset))


RETRIEVAL_SUITE = ("random", "latent_similarity", "sparse", "task_aware")
WEIGHTING_SUITE = ("full", "spatial_only", "entropy_only", "none")


def ablate_retrieval(base: ExperimentConfig, seeds=(0, 1, 2, 3, 4)) -> list[MetricsReport]:
    rows = []
    for seed in seeds:
        cfg = base.with_seed(seed)
        for mech in RETRIEVAL_SUITE:
            rows.append(run_experiment(replace(cfg, retrieval=replace(cfg.retrieval,
                                                                      mechanism=Mechanism(mech)))))
    return rows


def ablate_weighting(base: ExperimentConfig, seeds=(0, 1, 2, 3, 4)) -> list[MetricsReport]:
    base = replace(base, retrieval=replace(base.retrieval, mechanism=Mechanism.TASK_AWARE))
    rows = []
    for seed in seeds:
        cfg = base.with_seed(seed)
        for mode in WEIGHTING_SUITE:
            rows.append(run_experiment(replace(cfg, decoder=replace(cfg.decoder, weighting=mode))))
    return rows


def summarize(rows: list[MetricsReport], key: str) -> dict[str, dict]:
    """Mean test R^2 / precision per value of ``descriptor[key]``, in first-seen order."""
    groups: dict[str, list[MetricsReport]] = {}
    for r in rows:
        groups.setdefault(r.descriptor[key], []).append(r)
    return {
        name: {
            "test_r2": float(np.mean([r.test.r2 for r in rs])),
            "train_r2": float(np.mean([r.train.r2 for r in rs])),
            "retrieval_precision": float(np.mean([r.retrieval_precision for r in rs])),
            "runs": len(rs),
        }
        for name, rs in groups.items()
    }


def write_reports(rows: list[MetricsReport], csv_path, json_path=None) -> None:
    csv_path = Path(csv_path)
    csv_path.parent.mkdir(parents=True, exist_ok=True)
    table = [r.row() for r in rows]
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(table[0]), lineterminator="\n")
        writer.writeheader()
        writer.writerows(table)
    json_path = Path(json_path) if json_path else csv_path.with_suffix(".json")
    json_path.write_text(json.dumps([r.to_json() for r in rows], indent=2) + "\n",
                         encoding="utf-8")


def experiment_config_to_json(cfg: ExperimentConfig) -> dict:
    out = asdict(cfg)
    out["retrieval"]["mechanism"] = cfg.retrieval.mechanism.value
    out["train"]["optimizer"] = cfg.train.optimizer.value
    return out
