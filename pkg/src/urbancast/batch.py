"""The array bundle handed from retrieval to the decoders."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import DimensionError


@dataclass(frozen=True)
class GeoBatch:
    """Per-target value sets, stacked.

    Slot 0 of every row is the target region itself (distance 0); slots
    ``1..m-1`` are its retrieved context regions in retrieval order.

    values:    (N, m, D) region embeddings, float64
    distances: (N, m) distance from each slot's centroid to the target's
    entropies: (N, m) cached entropy of each slot's embedding
    """

    target_ids: np.ndarray
    values: np.ndarray
    distances: np.ndarray
    entropies: np.ndarray

    def __post_init__(self):
        n, m, _ = self.values.shape
        if self.distances.shape != (n, m) or self.entropies.shape != (n, m):
            raise DimensionError("distances/entropies must be (N, m) matching values")
        if self.target_ids.shape != (n,):
            raise DimensionError("one target id per row required")

    def __len__(self):
        return self.values.shape[0]

    @property
    def slots(self) -> int:
        return self.values.shape[1]

    @property
    def dim(self) -> int:
        return self.values.shape[2]

    def __getitem__(self, idx) -> "GeoBatch":
        idx = np.atleast_1d(np.arange(len(self))[idx])
        return GeoBatch(self.target_ids[idx], self.values[idx], self.distances[idx],
                        self.entropies[idx])

    @property
    def targets(self) -> np.ndarray:
        """(N, D) target embeddings."""
        return self.values[:, 0, :]

    @classmethod
    def from_contexts(cls, db, contexts) -> "GeoBatch":
        contexts = list(contexts)
        if not contexts:
            return cls(np.zeros(0, dtype=np.int64), np.zeros((0, 1, db.dim)),
                       np.zeros((0, 1)), np.zeros((0, 1)))
        sizes = {len(c) for c in contexts}
        if len(sizes) != 1:
            raise DimensionError(f"context sets have differing sizes {sorted(sizes)}")
        rows_v, rows_d, rows_h = [], [], []
        for c in contexts:
            ids = [c.target_id, *c.ids]
            rows_v.append(db.embedding_matrix(ids))
            rows_d.append(np.concatenate([[0.0], c.distances]))
            rows_h.append(db.entropies[db.positions(ids)])
        return cls(np.array([c.target_id for c in contexts], dtype=np.int64),
                   np.stack(rows_v), np.stack(rows_d), np.stack(rows_h))
