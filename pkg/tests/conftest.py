import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from urbancast.batch import GeoBatch  # noqa: E402
from urbancast.geotransformer import AttentionConfig, init_params  # noqa: E402
from urbancast.region_store import RegionDatabase, region_entropy  # noqa: E402

WORDS = ["park", "transit", "station", "retail", "housing", "rail", "yard", "office",
         "school", "pond", "market", "depot"]


def random_db(rng, n=40, dim=6, lattice=False):
    """Random regions; ``lattice`` puts centroids on integer points so distance ties occur."""
    ids = rng.choice(10 * n, size=n, replace=False)
    if lattice:
        xy = rng.integers(0, 6, size=(n, 2)).astype(float)
    else:
        xy = rng.uniform(0, 1000, size=(n, 2))
    emb = rng.normal(size=(n, dim)).astype(np.float32)
    desc = [" ".join(rng.choice(WORDS, size=3)) for _ in range(n)]
    return RegionDatabase(ids, xy, emb, desc)


def random_batch(rng, n, m, D, scale=1.0):
    values = rng.normal(scale=scale, size=(n, m, D))
    distances = np.concatenate([np.zeros((n, 1)), rng.uniform(10, 900, size=(n, m - 1))], axis=1)
    entropies = np.array([[region_entropy(v) for v in row] for row in values])
    return GeoBatch(np.arange(n), values, distances, entropies)


def tiny_model(seed, *, D=8, h=2, L=2, m=5, scale=1.0, **kw):
    cfg = AttentionConfig(d_model=D, heads=h, layers=L, context_slots=m, **kw)
    model = init_params(cfg, seed)
    if scale != 1.0:
        model = model.unflatten(model.flatten() * scale)
    return model, cfg


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
