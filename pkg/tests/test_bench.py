import csv
import json
import math
from dataclasses import replace

import numpy as np
import pytest
from oracles import metrics_formula, planted_labels_brute

from urbancast.bench.city import (
    CategorySpec,
    CityLayout,
    SyntheticCityConfig,
    generate_city,
)
from urbancast.bench.experiment import (
    RETRIEVAL_SUITE,
    DecoderConfig,
    ExperimentConfig,
    ablate_retrieval,
    ablate_weighting,
    experiment_config_to_json,
    run_experiment,
    summarize,
    write_reports,
)
from urbancast.bench.metrics import metrics, retrieval_precision
from urbancast.bench.tasks import TEST, TRAIN, LabeledDataset, PlantedTask, plant_labels, split
from urbancast.exceptions import DimensionError, InputError
from urbancast.geotransformer import TrainConfig
from urbancast.retrieval import ContextSet, Mechanism, RetrievalConfig

# -- city ------------------------------------------------------------------------------


def test_single_category_city():
    cat = CategorySpec("only", 1, "plain blocks", 1.0)
    db, layout = generate_city(SyntheticCityConfig(rows=2, cols=2, categories=(cat,),
                                                   signal_scale=0.0))
    assert len(db) == 4 and set(db.descriptions) == {"plain blocks"}
    spread = db.embeddings - db.embeddings.mean(axis=0)
    assert np.all(np.abs(spread) < 5 * 0.2 * 2)
    assert layout.categories.tolist() == [0, 0, 0, 0]


def test_city_is_deterministic_per_seed():
    a, la = generate_city(SyntheticCityConfig(seed=3))
    b, lb = generate_city(SyntheticCityConfig(seed=3))
    c, _ = generate_city(SyntheticCityConfig(seed=4))
    assert a == b and np.array_equal(la.values, lb.values)
    assert not a == c


def test_city_category_frequencies():
    freqs = (0.4, 0.3, 0.15, 0.1, 0.05)
    cats = tuple(CategorySpec(f"c{i}", i, f"kind {i}", f) for i, f in enumerate(freqs))
    _, layout = generate_city(SyntheticCityConfig(rows=20, cols=20, categories=cats))
    counts = np.bincount(layout.categories, minlength=5) / 400
    assert np.all(np.abs(counts - freqs) <= 0.05)


def test_city_grid_geometry():
    db, _ = generate_city(SyntheticCityConfig(rows=3, cols=4, spacing=500))
    assert db.ids.tolist() == list(range(12))
    assert db.centroids[5].tolist() == [500.0, 500.0]


def test_city_config_validation_and_json():
    with pytest.raises(InputError):
        SyntheticCityConfig(rows=1, cols=1)
    with pytest.raises(InputError):
        SyntheticCityConfig(categories=(CategorySpec("a", 1, "t", 0.5),))
    cfg = SyntheticCityConfig(rows=4)
    assert SyntheticCityConfig.from_json(json.loads(json.dumps(cfg.to_json()))) == cfg


def test_degraded_tiles_have_low_entropy():
    db, layout = generate_city(SyntheticCityConfig(degraded_fraction=0.3, seed=1))
    assert layout.degraded.any()
    assert db.entropies[layout.degraded].mean() < db.entropies[~layout.degraded].mean()


def test_layout_round_trip(tmp_path):
    _, layout = generate_city(SyntheticCityConfig(rows=3, cols=3))
    layout.save(tmp_path / "l.json")
    back = CityLayout.load(tmp_path / "l.json")
    assert back.category_names == layout.category_names
    assert np.array_equal(back.values, layout.values)


# -- labels -----------------------------------------------------------------------------

def test_labels_zero_weight_and_noise_are_base():
    db, layout = generate_city(SyntheticCityConfig(rows=5, cols=5))
    task = PlantedTask(weight=0.0, noise_sigma=0.0)
    ds = plant_labels(db, layout, task)
    expect = [task.base[layout.category_of(i)] for i in range(len(db))]
    assert ds.labels.tolist() == expect


def test_labels_without_relevant_neighbours():
    cats = (CategorySpec("residential", 1, "homes", 0.5), CategorySpec("park", 2, "trees", 0.5),
            CategorySpec("commercial", 3, "shops", 0.0), CategorySpec("transit", 4, "rail", 0.0))
    db, layout = generate_city(SyntheticCityConfig(rows=4, cols=4, categories=cats))
    task = PlantedTask(noise_sigma=0.0)
    ds = plant_labels(db, layout, task)
    assert ds.labels.tolist() == [task.base[layout.category_of(i)] for i in range(16)]
    assert all(len(v) == 0 for v in ds.relevant.values())


@pytest.mark.parametrize("seed", [0, 1])
def test_labels_match_brute_force(seed):
    db, layout = generate_city(SyntheticCityConfig(rows=9, cols=9, seed=seed))
    task = PlantedTask(decay=0.5)
    ds = plant_labels(db, layout, task, seed)
    noise = np.random.default_rng(seed).normal(0.0, task.noise_sigma, len(db))
    ref = planted_labels_brute(db.centroids.tolist(), layout.categories, layout.category_names,
                               layout.values, task, noise)
    assert np.allclose(ds.labels, ref, atol=1e-12, rtol=0)


def test_labels_unknown_category_rejected():
    db, layout = generate_city(SyntheticCityConfig(rows=3, cols=3))
    with pytest.raises(InputError):
        plant_labels(db, layout, PlantedTask(relevant_categories=("airport",)))
    with pytest.raises(InputError):
        PlantedTask(radius=0)


# -- split ------------------------------------------------------------------------------

def _dataset(n):
    return LabeledDataset(np.arange(n), np.zeros(n))


def test_split_sizes_and_determinism():
    s = split(_dataset(10), 0.8, seed=1)
    assert len(s.ids_in(TRAIN)) == 8 and len(s.ids_in(TEST)) == 2
    assert s.split == split(_dataset(10), 0.8, seed=1).split
    assert set(s.ids_in(TRAIN)) | set(s.ids_in(TEST)) == set(range(10))
    assert not set(s.ids_in(TRAIN)) & set(s.ids_in(TEST))
    assert len(split(_dataset(144), 0.8).ids_in(TRAIN)) == math.ceil(0.8 * 144)


def test_split_errors():
    with pytest.raises(InputError):
        split(_dataset(1))
    with pytest.raises(InputError):
        split(_dataset(5), 1.0)


def test_dataset_json_round_trip(tmp_path):
    ds = split(LabeledDataset(np.arange(4), np.array([0.5, 1, 2, 3]),
                              {0: frozenset({1, 2})}), 0.5)
    ds.save(tmp_path / "d.json")
    back = LabeledDataset.load(tmp_path / "d.json")
    assert back.split == ds.split and back.relevant == ds.relevant
    assert back.labels.tobytes() == ds.labels.tobytes()


# -- metrics ----------------------------------------------------------------------------

def test_metrics_examples():
    m = metrics([1, 2, 3], [1, 2, 3])
    assert (m.mse, m.mae, m.r2) == (0.0, 0.0, 1.0)
    y = np.array([1.0, 4.0, 2.0, 7.0])
    assert metrics(np.full(4, y.mean()), y).r2 == pytest.approx(0.0, abs=1e-15)
    m = metrics([1, 2, 3], [2, 2, 2])
    assert m.mse == pytest.approx(2 / 3) and m.mae == pytest.approx(2 / 3)
    assert m.r2 == -math.inf and not m.r2_defined


def test_metrics_match_formula():
    rng = np.random.default_rng(0)
    for _ in range(50):
        n = int(rng.integers(2, 1001))
        p, y = rng.normal(size=n), rng.normal(size=n) * 3
        m = metrics(p, y)
        mse, mae, r2 = metrics_formula(p, y)
        assert abs(m.mse - mse) <= 1e-12 and abs(m.mae - mae) <= 1e-12
        assert abs(m.r2 - r2) <= 1e-12


def test_metrics_errors():
    with pytest.raises(DimensionError):
        metrics([1, 2], [1])
    with pytest.raises(InputError):
        metrics([], [])


def test_retrieval_precision():
    ctx = [ContextSet(0, (1, 2), np.zeros((2, 1)), np.zeros(2), np.zeros(2), Mechanism.RANDOM),
           ContextSet(5, (6, 7, 8, 9), np.zeros((4, 1)), np.zeros(4), np.zeros(4),
                      Mechanism.RANDOM)]
    rel = {0: frozenset({1}), 5: frozenset({6, 7, 8, 9, 10})}
    assert retrieval_precision(ctx, rel) == 0.75


# -- experiments -------------------------------------------------------------------------

def _quick(**kw):
    base = ExperimentConfig(city=SyntheticCityConfig(rows=7, cols=7),
                            train=TrainConfig(learning_rate=3e-3, epochs=20, weight_decay=0.01),
                            decoder=DecoderConfig(heads=2))
    return replace(base, **kw)


def test_experiment_is_reproducible():
    a = run_experiment(_quick())
    b = run_experiment(_quick())
    assert json.dumps(a.to_json()) == json.dumps(b.to_json())


def test_bypass_and_none_configs_differ_only_in_flag():
    base = _quick()
    a = run_experiment(replace(base, decoder=replace(base.decoder, weighting="bypass")))
    b = run_experiment(replace(base, decoder=replace(base.decoder, weighting="none")))
    assert a.data_hash == b.data_hash
    assert {k: v for k, v in a.descriptor.items() if k != "weighting"} == \
           {k: v for k, v in b.descriptor.items() if k != "weighting"}
    # multiplying by ones is exact, so the two runs agree to round-off
    assert a.test.mse == pytest.approx(b.test.mse, rel=1e-9)


def test_mlp_decoder_runs():
    r = run_experiment(_quick(decoder=DecoderConfig(kind="mlp", hidden_units=8, layers=1)))
    assert r.descriptor["decoder"] == "mlp" and math.isfinite(r.test.mse)


def test_ablation_rows_share_data_and_write_reports(tmp_path):
    rows = ablate_retrieval(_quick(), seeds=(0,))
    assert [r.descriptor["mechanism"] for r in rows] == list(RETRIEVAL_SUITE)
    assert len({r.data_hash for r in rows}) == 1
    write_reports(rows, tmp_path / "t.csv")
    table = list(csv.DictReader(open(tmp_path / "t.csv")))
    assert [t["mechanism"] for t in table] == list(RETRIEVAL_SUITE)
    assert len(json.loads((tmp_path / "t.json").read_text())) == 4
    w = ablate_weighting(_quick(), seeds=(1,))
    assert len({r.data_hash for r in w}) == 1
    assert set(summarize(w, "weighting")) == {"full", "spatial_only", "entropy_only", "none"}


def test_default_benchmark_beats_mean_predictor_on_average():
    rows = [run_experiment(ExperimentConfig().with_seed(s)) for s in range(5)]
    assert np.mean([r.test.r2 for r in rows]) > 0.0


def test_experiment_config_json():
    data = experiment_config_to_json(ExperimentConfig())
    assert data["retrieval"]["mechanism"] == "task_aware"
    assert data["retrieval"]["k"] == 24 and data["retrieval"]["n"] == 8
    json.dumps(data)


def test_retrieval_config_validation():
    with pytest.raises(InputError):
        RetrievalConfig(lasso_lambda=-1)
