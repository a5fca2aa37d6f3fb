"""Context retrieval: pick ``n`` of a target's ``k`` nearest regions.

Four mechanisms share one contract (subset of the k-NN candidates, target
excluded, no duplicates, ``min(n, #candidates)`` entries):

* ``task_aware``        prototype text from a language model, ranked by
                        cosine similarity to region descriptions
* ``random``            seeded uniform sample
* ``latent_similarity`` cosine similarity of embeddings to the target's
* ``sparse``            largest |Lasso coefficient| when regressing the
                        target embedding on candidate embeddings
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

from ..exceptions import InputError
from ..region_store import RegionDatabase, knn
from .clients import (
    LanguageModelClient,
    TextEmbedder,
    embed_text,
    infer_prototype,
)
from .lasso import lasso_fit
from .prompt import TaskSpec, build_prompt


class Mechanism(str, Enum):
    TASK_AWARE = "task_aware"
    RANDOM = "random"
    LATENT_SIMILARITY = "latent_similarity"
    SPARSE = "sparse"


@dataclass(frozen=True)
class RetrievalConfig:
    k: int = 121
    n: int = 81
    mechanism: Mechanism = Mechanism.TASK_AWARE
    lasso_lambda: float = 0.01
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "mechanism", Mechanism(self.mechanism))
        if self.k < 0 or self.n < 0:
            raise InputError("k and n must be non-negative")
        if not self.lasso_lambda >= 0:
            raise InputError("lasso_lambda must be non-negative")


@dataclass(frozen=True)
class ContextSet:
    target_id: int
    ids: tuple[int, ...]
    embeddings: np.ndarray = field(repr=False)
    distances: np.ndarray
    entropies: np.ndarray
    mechanism: Mechanism

    def __len__(self):
        return len(self.ids)

    def __eq__(self, other):
        if not isinstance(other, ContextSet):
            return NotImplemented
        return (
            self.target_id == other.target_id
            and self.ids == other.ids
            and self.mechanism == other.mechanism
            and np.array_equal(self.embeddings, other.embeddings)
            and np.array_equal(self.distances, other.distances)
            and np.array_equal(self.entropies, other.entropies)
        )

    def to_json(self) -> dict:
        return {
            "target_id": self.target_id,
            "mechanism": self.mechanism.value,
            "entries": [
                {"id": i, "distance": float(d), "entropy": float(h)}
                for i, d, h in zip(self.ids, self.distances, self.entropies)
            ],
        }


def make_context(db: RegionDatabase, target, ids: Sequence[int], mechanism) -> ContextSet:
    ids = tuple(int(i) for i in ids)
    pos = db.positions(ids)
    return ContextSet(
        target_id=int(target),
        ids=ids,
        embeddings=db.embeddings[pos].astype(np.float64),
        distances=db.distances_from(target, ids),
        entropies=db.entropies[pos].copy(),
        mechanism=Mechanism(mechanism),
    )


def _top_n(scores: np.ndarray, ids: np.ndarray, n: int) -> list[int]:
    """Top ``n`` ids by descending score, ties by ascending id."""
    order = np.lexsort((ids, -scores))
    return ids[order[:n]].tolist()


def _unit(v: np.ndarray) -> np.ndarray:
    norm = np.linalg.norm(v, axis=-1, keepdims=True)
    if np.any(norm == 0):
        raise InputError("zero embedding has no direction for cosine similarity")
    return v / norm


def retrieve_task_aware(db: RegionDatabase, target, task: TaskSpec, cfg: RetrievalConfig,
                        client: LanguageModelClient, embedder: TextEmbedder) -> ContextSet:
    candidates = np.array(knn(db, target, cfg.k), dtype=np.int64)
    if len(candidates) == 0:
        return make_context(db, target, [], Mechanism.TASK_AWARE)
    record = db[target]
    prototype = infer_prototype(client, build_prompt(task, record.description))
    query = embed_text(embedder, prototype.text)

    texts = [db.descriptions[p] for p in db.positions(candidates)]
    unique = sorted(set(texts))
    vectors = dict(zip(unique, embedder.embed(unique)))
    # cosine on both sides so scaled or unnormalized embedders rank identically
    q = _unit(np.asarray(query, dtype=np.float64))
    mat = _unit(np.stack([np.asarray(vectors[t], dtype=np.float64) for t in texts]))
    scores = np.clip(mat @ q, -1.0, 1.0)
    return make_context(db, target, _top_n(scores, candidates, cfg.n), Mechanism.TASK_AWARE)


def _target_rng(seed: int, target) -> np.random.Generator:
    return np.random.default_rng([int(seed), int(target)])


def retrieve_random(db: RegionDatabase, target, cfg: RetrievalConfig) -> ContextSet:
    candidates = np.array(knn(db, target, cfg.k), dtype=np.int64)
    n = min(cfg.n, len(candidates))
    picked = _target_rng(cfg.seed, target).choice(candidates, size=n, replace=False)
    return make_context(db, target, np.sort(picked).tolist(), Mechanism.RANDOM)


def retrieve_latent_similarity(db: RegionDatabase, target, cfg: RetrievalConfig) -> ContextSet:
    candidates = np.array(knn(db, target, cfg.k), dtype=np.int64)
    if len(candidates) == 0:
        return make_context(db, target, [], Mechanism.LATENT_SIMILARITY)
    z = _unit(db.embedding_matrix([target])[0])
    mat = _unit(db.embedding_matrix(candidates))
    scores = np.clip(mat @ z, -1.0, 1.0)
    return make_context(db, target, _top_n(scores, candidates, cfg.n),
                        Mechanism.LATENT_SIMILARITY)


def sparse_selection(coef: np.ndarray, candidates: Sequence[int], n: int) -> list[int]:
    """Largest |coef| first (zeros excluded), padded in candidate (distance) order."""
    candidates = np.asarray(candidates, dtype=np.int64)
    mag = np.abs(coef)
    nz = mag > 0
    chosen = _top_n(mag[nz], candidates[nz], n)
    if len(chosen) < n:
        taken = set(chosen)
        chosen += [c for c in candidates.tolist() if c not in taken][: n - len(chosen)]
    return chosen


def retrieve_sparse(db: RegionDatabase, target, cfg: RetrievalConfig) -> ContextSet:
    candidates = knn(db, target, cfg.k)
    if not candidates:
        return make_context(db, target, [], Mechanism.SPARSE)
    design = db.embedding_matrix(candidates).T
    response = db.embedding_matrix([target])[0]
    coef = lasso_fit(design, response, cfg.lasso_lambda)
    return make_context(db, target, sparse_selection(coef, candidates, cfg.n), Mechanism.SPARSE)


def retrieve(db: RegionDatabase, target, cfg: RetrievalConfig, task: TaskSpec | None = None,
             client: LanguageModelClient | None = None,
             embedder: TextEmbedder | None = None) -> ContextSet:
    if cfg.mechanism is Mechanism.TASK_AWARE:
        if task is None or client is None or embedder is None:
            raise InputError("task-aware retrieval needs a task, a language model and an embedder")
        return retrieve_task_aware(db, target, task, cfg, client, embedder)
    if cfg.mechanism is Mechanism.RANDOM:
        return retrieve_random(db, target, cfg)
    if cfg.mechanism is Mechanism.LATENT_SIMILARITY:
        return retrieve_latent_similarity(db, target, cfg)
    return retrieve_sparse(db, target, cfg)


def retrieve_many(db: RegionDatabase, targets: Sequence[int], cfg: RetrievalConfig,
                  task: TaskSpec | None = None, client: LanguageModelClient | None = None,
                  embedder: TextEmbedder | None = None, max_in_flight: int = 4
                  ) -> list[ContextSet]:
    """Retrieve for every target; output is aligned with ``targets``.

    Task-aware retrieval issues at most ``max_in_flight`` concurrent language
    model requests. Completion order never affects the result.
    """
    targets = [int(t) for t in targets]
    if cfg.mechanism is not Mechanism.TASK_AWARE or max_in_flight <= 1 or len(targets) < 2:
        return [retrieve(db, t, cfg, task, client, embedder) for t in targets]
    with ThreadPoolExecutor(max_workers=max_in_flight) as pool:
        return list(pool.map(lambda t: retrieve(db, t, cfg, task, client, embedder), targets))
