"""Region representation store.

Holds one latent embedding, one text description and one planar centroid per
urban region, answers spatial k-nearest-neighbour queries, and reads/writes
region bundles (a directory with ``manifest.json``, ``embeddings.f32`` and
``regions.jsonl``).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .exceptions import (
    BundleError,
    DimensionError,
    DuplicateRegionError,
    InputError,
    ManifestError,
    MissingBundleFileError,
    NonFiniteValueError,
    PayloadSizeError,
    RegionNotFoundError,
)

__all__ = [
    "GeoPoint",
    "RegionRecord",
    "RegionDatabase",
    "Violation",
    "region_entropy",
    "euclidean_distance",
    "knn",
    "load_bundle",
    "save_bundle",
    "validate",
]

ENTROPY_TOL = 1e-9

MANIFEST = "manifest.json"
EMBEDDINGS = "embeddings.f32"
REGIONS = "regions.jsonl"


class GeoPoint(NamedTuple):
    """Planar coordinates in meters (x east, y north)."""

    x: float
    y: float


@dataclass(frozen=True)
class RegionRecord:
    id: int
    centroid: GeoPoint
    embedding: np.ndarray
    description: str
    entropy: float


@dataclass(frozen=True)
class Violation:
    region_id: int | None
    reason: str

    def __str__(self):
        where = "database" if self.region_id is None else f"region {self.region_id}"
        return f"{where}: {self.reason}"


def region_entropy(embedding) -> float:
    """Shannon entropy (nats) of ``softmax(embedding)``.

    The result lies in ``[0, ln D]``.
    """
    z = np.asarray(embedding, dtype=np.float64)
    if z.ndim != 1 or z.size == 0:
        raise DimensionError("entropy needs a non-empty 1-d embedding")
    if not np.all(np.isfinite(z)):
        raise InputError("embedding has non-finite components")
    shifted = z - z.max()
    log_norm = math.log(np.exp(shifted).sum())
    log_p = shifted - log_norm
    h = -float(np.dot(np.exp(log_p), log_p))
    return min(max(h, 0.0), math.log(z.size))


def _entropies(embeddings: np.ndarray) -> np.ndarray:
    out = np.full(len(embeddings), np.nan)
    for i, row in enumerate(embeddings):
        if np.all(np.isfinite(row)):
            out[i] = region_entropy(row)
    return out


def _check_point(p) -> tuple[float, float]:
    x, y = float(p[0]), float(p[1])
    if not (math.isfinite(x) and math.isfinite(y)):
        raise InputError(f"non-finite coordinate {p!r}")
    return x, y


def euclidean_distance(a, b) -> float:
    ax, ay = _check_point(a)
    bx, by = _check_point(b)
    dx, dy = ax - bx, ay - by
    return math.sqrt(dx * dx + dy * dy)


class RegionDatabase:
    """Immutable id-keyed collection of regions with a lazily built k-d tree.

    Arrays are stored in ascending id order. Embeddings are kept as float32;
    ``embedding_matrix(..., dtype=np.float64)`` upcasts for numerical work.
    The constructor does not enforce invariants (use :func:`validate`), so a
    damaged database can still be inspected.
    """

    def __init__(self, ids, centroids, embeddings, descriptions, entropies=None):
        ids = np.asarray(ids, dtype=np.int64)
        centroids = np.asarray(centroids, dtype=np.float64).reshape(-1, 2)
        embeddings = np.asarray(embeddings, dtype=np.float32)
        if embeddings.ndim != 2:
            raise DimensionError("embeddings must be a 2-d (count, dim) array")
        descriptions = list(descriptions)
        n = len(ids)
        if not (len(centroids) == len(embeddings) == len(descriptions) == n):
            raise DimensionError(
                f"field lengths disagree: ids={n}, centroids={len(centroids)}, "
                f"embeddings={len(embeddings)}, descriptions={len(descriptions)}"
            )
        if entropies is None:
            entropies = _entropies(embeddings)
        entropies = np.asarray(entropies, dtype=np.float64)
        if entropies.shape != (n,):
            raise DimensionError("one entropy per region required")

        order = np.argsort(ids, kind="stable")
        self._ids = ids[order]
        self._xy = centroids[order]
        self._emb = embeddings[order]
        self._desc = tuple(descriptions[i] for i in order)
        self._entropy = entropies[order]
        for arr in (self._ids, self._xy, self._emb, self._entropy):
            arr.setflags(write=False)
        self._pos = {}
        for i, rid in enumerate(self._ids.tolist()):
            self._pos.setdefault(rid, i)
        self._tree = None

    @classmethod
    def from_records(cls, records: Iterable[RegionRecord]) -> "RegionDatabase":
        records = list(records)
        if not records:
            raise InputError("at least one region is required")
        return cls(
            [r.id for r in records],
            [tuple(r.centroid) for r in records],
            np.stack([np.asarray(r.embedding, dtype=np.float32) for r in records]),
            [r.description for r in records],
            [r.entropy for r in records],
        )

    # -- basic accessors -------------------------------------------------

    @property
    def dim(self) -> int:
        return self._emb.shape[1]

    @property
    def ids(self) -> np.ndarray:
        return self._ids

    @property
    def centroids(self) -> np.ndarray:
        return self._xy

    @property
    def embeddings(self) -> np.ndarray:
        return self._emb

    @property
    def descriptions(self) -> tuple[str, ...]:
        return self._desc

    @property
    def entropies(self) -> np.ndarray:
        return self._entropy

    def __len__(self):
        return len(self._ids)

    def __contains__(self, region_id):
        return int(region_id) in self._pos

    def __iter__(self):
        return (self[rid] for rid in self._ids.tolist())

    def position(self, region_id) -> int:
        try:
            return self._pos[int(region_id)]
        except KeyError:
            raise RegionNotFoundError(region_id) from None

    def positions(self, region_ids) -> np.ndarray:
        return np.array([self.position(r) for r in region_ids], dtype=np.int64)

    def __getitem__(self, region_id) -> RegionRecord:
        i = self.position(region_id)
        return RegionRecord(
            id=int(self._ids[i]),
            centroid=GeoPoint(float(self._xy[i, 0]), float(self._xy[i, 1])),
            embedding=self._emb[i],
            description=self._desc[i],
            entropy=float(self._entropy[i]),
        )

    def embedding_matrix(self, region_ids, dtype=np.float64) -> np.ndarray:
        return self._emb[self.positions(region_ids)].astype(dtype)

    def distances_from(self, region_id, others) -> np.ndarray:
        """Euclidean distances from one region's centroid to each of ``others``."""
        c = self._xy[self.position(region_id)]
        pts = self._xy[self.positions(others)] if len(others) else np.empty((0, 2))
        return _planar_distances(c, pts)

    # -- spatial index ---------------------------------------------------

    @property
    def tree(self) -> cKDTree:
        if self._tree is None:
            self._tree = cKDTree(self._xy)
        return self._tree

    def __eq__(self, other):
        if not isinstance(other, RegionDatabase):
            return NotImplemented
        return (
            np.array_equal(self._ids, other._ids)
            and np.array_equal(self._xy, other._xy)
            and np.array_equal(self._emb, other._emb)
            and self._desc == other._desc
            and np.array_equal(self._entropy, other._entropy)
        )

    def __repr__(self):
        return f"RegionDatabase(count={len(self)}, dim={self.dim})"


def _planar_distances(center: np.ndarray, pts: np.ndarray) -> np.ndarray:
    # same arithmetic as euclidean_distance so tie-breaking agrees bit-for-bit
    dx = pts[:, 0] - center[0]
    dy = pts[:, 1] - center[1]
    return np.sqrt(dx * dx + dy * dy)


def knn(db: RegionDatabase, target, k: int) -> list[int]:
    """Ids of the ``k`` regions closest to ``target`` (target excluded).

    Sorted by (distance, id). Returns every other region when fewer than
    ``k`` exist.
    """
    if k < 0:
        raise InputError("k must be non-negative")
    pos = db.position(target)
    n = len(db)
    if k == 0 or n == 1:
        return []
    center = db.centroids[pos]
    if k + 1 >= n:
        cand = np.arange(n)
    else:
        d, _ = db.tree.query(center, k=k + 1)
        radius = float(np.max(d))
        # widen slightly so every region tied at the cut-off distance is seen
        cand = np.asarray(
            db.tree.query_ball_point(center, radius * (1 + 1e-9) + 1e-9), dtype=np.int64
        )
    cand = cand[cand != pos]
    dist = _planar_distances(center, db.centroids[cand])
    ids = db.ids[cand]
    order = np.lexsort((ids, dist))[:k]
    return ids[order].tolist()


# -- validation --------------------------------------------------------------


def validate(db: RegionDatabase) -> list[Violation]:
    """List every broken database/record invariant (empty when consistent)."""
    out: list[Violation] = []
    seen = set()
    for rid in db.ids.tolist():
        if rid in seen:
            out.append(Violation(rid, "duplicate id"))
        seen.add(rid)
        if rid < 0:
            out.append(Violation(rid, "negative id"))
    for i, rid in enumerate(db.ids.tolist()):
        if not np.all(np.isfinite(db.centroids[i])):
            out.append(Violation(rid, "non-finite centroid coordinate"))
        row = db.embeddings[i]
        if not np.all(np.isfinite(row)):
            out.append(Violation(rid, "non-finite embedding component"))
        else:
            h = region_entropy(row)
            cached = db.entropies[i]
            if not (abs(cached - h) <= ENTROPY_TOL):
                out.append(
                    Violation(rid, f"entropy mismatch: cached {cached!r}, computed {h!r}")
                )
        if not db.descriptions[i]:
            out.append(Violation(rid, "empty description"))
    return out


# -- bundle I/O ----------------------------------------------------------------


def save_bundle(db: RegionDatabase, path) -> None:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    manifest = {
        "dim": db.dim,
        "count": len(db),
        "coordinate_unit": "meters",
        "entropy_cached": True,
    }
    (path / MANIFEST).write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    db.embeddings.astype("<f4").tofile(path / EMBEDDINGS)
    with open(path / REGIONS, "w", encoding="utf-8", newline="\n") as fh:
        for i, rid in enumerate(db.ids.tolist()):
            row = {
                "id": rid,
                "x": float(db.centroids[i, 0]),
                "y": float(db.centroids[i, 1]),
                "description": db.descriptions[i],
                "entropy": float(db.entropies[i]),
            }
            fh.write(json.dumps(row, ensure_ascii=False) + "\n")


def _read_manifest(path: Path) -> dict:
    f = path / MANIFEST
    if not f.is_file():
        raise MissingBundleFileError(f"missing {f}")
    try:
        manifest = json.loads(f.read_text(encoding="utf-8"))
        dim, count = int(manifest["dim"]), int(manifest["count"])
    except (ValueError, KeyError, TypeError) as exc:
        raise ManifestError(f"malformed manifest {f}: {exc}") from exc
    if dim < 1 or count < 0:
        raise ManifestError(f"manifest has dim={dim}, count={count}")
    unit = manifest.get("coordinate_unit", "meters")
    if unit != "meters":
        raise ManifestError(f"unsupported coordinate unit {unit!r}")
    return manifest


def load_bundle(path) -> RegionDatabase:
    path = Path(path)
    if not path.is_dir():
        raise MissingBundleFileError(f"bundle directory {path} does not exist")
    manifest = _read_manifest(path)
    dim, count = int(manifest["dim"]), int(manifest["count"])
    for name in (EMBEDDINGS, REGIONS):
        if not (path / name).is_file():
            raise MissingBundleFileError(f"missing {path / name}")

    payload = (path / EMBEDDINGS).read_bytes()
    expected = count * dim * 4
    if len(payload) != expected:
        raise PayloadSizeError(
            f"{EMBEDDINGS} has {len(payload)} bytes, manifest implies "
            f"{count}x{dim}x4 = {expected}"
        )
    emb = np.frombuffer(payload, dtype="<f4").reshape(count, dim).astype(np.float32)

    rows = []
    with open(path / REGIONS, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
                rows.append(
                    (int(row["id"]), float(row["x"]), float(row["y"]),
                     str(row["description"]), row.get("entropy"))
                )
            except (ValueError, KeyError, TypeError) as exc:
                raise BundleError(f"{REGIONS} line {lineno}: {exc}") from exc
    if len(rows) != count:
        raise ManifestError(f"manifest count={count} but {REGIONS} has {len(rows)} rows")

    seen = set()
    for rid, *_ in rows:
        if rid in seen:
            raise DuplicateRegionError(rid)
        seen.add(rid)
    for i, (rid, x, y, _, h) in enumerate(rows):
        if not (math.isfinite(x) and math.isfinite(y)):
            raise NonFiniteValueError(f"region {rid}: non-finite centroid")
        if not np.all(np.isfinite(emb[i])):
            raise NonFiniteValueError(f"region {rid}: non-finite embedding")
        if h is not None and not math.isfinite(float(h)):
            raise NonFiniteValueError(f"region {rid}: non-finite entropy")

    if any(r[4] is None for r in rows):
        entropies = None
    else:
        entropies = [float(r[4]) for r in rows]
    db = RegionDatabase(
        [r[0] for r in rows],
        [(r[1], r[2]) for r in rows],
        emb,
        [r[3] for r in rows],
        entropies,
    )
    problems = validate(db)
    if problems:
        raise BundleError("invalid bundle: " + "; ".join(map(str, problems)))
    return db


def grid_database(
    rows: int,
    cols: int,
    embeddings: np.ndarray,
    descriptions: Sequence[str],
    spacing: float = 1.0,
) -> RegionDatabase:
    """Regions on a ``rows x cols`` lattice, ids in row-major order."""
    ids = np.arange(rows * cols)
    xy = np.stack([(ids % cols) * spacing, (ids // cols) * spacing], axis=1).astype(float)
    return RegionDatabase(ids, xy, embeddings, descriptions)
