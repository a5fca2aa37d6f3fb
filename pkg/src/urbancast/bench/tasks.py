"""Planted labelling rules, labelled datasets and train/test splits."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..exceptions import InputError
from ..region_store import RegionDatabase
from ..retrieval import TaskSpec
from .city import CityLayout


@dataclass(frozen=True)
class PlantedTask:
    """Label rule with a known set of relevant regions per target.

    label_i = base[category_i]
              + sum_{j != i, category_j relevant, d_ij <= radius}
                    weight * value_j * (1 - decay * d_ij / radius)
              + N(0, noise_sigma^2)
    """

    name: str = "ride-share"
    task_text: str = "ride-share demand"
    relevant_categories: tuple[str, ...] = ("commercial", "transit")
    radius: float = 1500.0
    weight: float = 1.0
    decay: float = 0.5
    base: dict = field(default_factory=lambda: {"residential": 0.5, "commercial": 1.0,
                                                "transit": 1.0, "industrial": 0.0,
                                                "park": -0.5})
    noise_sigma: float = 0.1
    # canned language-model answer for the offline mock client
    prototype: str = "transit stations, bus stops, commercial corridors, retail shops and restaurants"

    def __post_init__(self):
        object.__setattr__(self, "relevant_categories", tuple(self.relevant_categories))
        if not self.radius > 0:
            raise InputError("radius must be positive")
        if not self.relevant_categories:
            raise InputError("at least one relevant category is required")
        if not 0.0 <= self.decay <= 1.0:
            raise InputError("decay must lie in [0, 1]")

    @property
    def spec(self) -> TaskSpec:
        return TaskSpec(self.name, self.task_text)

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, data: dict) -> "PlantedTask":
        return cls(**data)

    @classmethod
    def load(cls, path) -> "PlantedTask":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


TRAIN, TEST = "train", "test"


@dataclass
class LabeledDataset:
    ids: np.ndarray
    labels: np.ndarray
    relevant: dict[int, frozenset] = field(default_factory=dict)
    split: dict[int, str] = field(default_factory=dict)

    def __len__(self):
        return len(self.ids)

    def ids_in(self, part: str) -> np.ndarray:
        return np.array([i for i in self.ids.tolist() if self.split.get(i) == part], dtype=np.int64)

    def labels_for(self, ids) -> np.ndarray:
        lookup = dict(zip(self.ids.tolist(), self.labels.tolist()))
        return np.array([lookup[int(i)] for i in ids], dtype=np.float64)

    def to_json(self) -> dict:
        return {
            "ids": self.ids.tolist(),
            "labels": self.labels.tolist(),
            "split": {str(k): v for k, v in sorted(self.split.items())},
            "relevant": {str(k): sorted(v) for k, v in sorted(self.relevant.items())},
        }

    @classmethod
    def from_json(cls, data: dict) -> "LabeledDataset":
        return cls(
            np.array(data["ids"], dtype=np.int64),
            np.array(data["labels"], dtype=np.float64),
            {int(k): frozenset(v) for k, v in data.get("relevant", {}).items()},
            {int(k): v for k, v in data.get("split", {}).items()},
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json()) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "LabeledDataset":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


def plant_labels(db: RegionDatabase, layout: CityLayout, task: PlantedTask, seed=0
                 ) -> LabeledDataset:
    relevant_idx = {layout.category_names.index(c) for c in task.relevant_categories
                    if c in layout.category_names}
    missing = set(task.relevant_categories) - set(layout.category_names)
    if missing:
        raise InputError(f"task names unknown categories {sorted(missing)}")
    xy = db.centroids
    is_rel = np.isin(layout.categories, list(relevant_idx))
    tree_hits = db.tree.query_ball_point(xy, task.radius * (1 + 1e-12))
    noise = np.random.default_rng(seed).normal(0.0, task.noise_sigma, len(db))

    labels = np.empty(len(db))
    relevant = {}
    for i in range(len(db)):
        hits = np.array([j for j in tree_hits[i] if j != i and is_rel[j]], dtype=np.int64)
        if len(hits):
            d = np.sqrt(((xy[hits] - xy[i]) ** 2).sum(axis=1))
            keep = d <= task.radius
            hits, d = hits[keep], d[keep]
        else:
            d = np.zeros(0)
        contrib = task.weight * layout.values[hits] * (1.0 - task.decay * d / task.radius)
        labels[i] = task.base.get(layout.category_of(i), 0.0) + contrib.sum() + noise[i]
        relevant[int(db.ids[i])] = frozenset(db.ids[hits].tolist())
    return LabeledDataset(db.ids.copy(), labels, relevant)


def split(dataset: LabeledDataset, fraction=0.8, seed=0) -> LabeledDataset:
    """Seeded random split: the first ceil(fraction * N) of a permutation train."""
    n = len(dataset)
    if n < 2:
        raise InputError("need at least two records to split")
    if not 0.0 < fraction < 1.0:
        raise InputError("fraction must lie strictly between 0 and 1")
    n_train = min(math.ceil(round(fraction * n, 9)), n - 1)
    order = np.random.default_rng(seed).permutation(n)
    assignment = {}
    for rank, idx in enumerate(order):
        assignment[int(dataset.ids[idx])] = TRAIN if rank < n_train else TEST
    return LabeledDataset(dataset.ids, dataset.labels, dataset.relevant, assignment)
