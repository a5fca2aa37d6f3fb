import numpy as np
import pytest
from conftest import random_batch, tiny_model
from oracles import central_differences, forward_loop, relative_error

from urbancast.batch import GeoBatch
from urbancast.bench.city import SyntheticCityConfig, generate_city
from urbancast.exceptions import CheckpointError, InputError, NonFiniteForwardError
from urbancast.geotransformer import (
    AttentionConfig,
    init_params,
    load_checkpoint,
    predict_batch,
    save_checkpoint,
)
from urbancast.geotransformer.attention import GeoContext
from urbancast.geotransformer.model import (
    batch_loss,
    batch_weights,
    forward,
    forward_batch,
    gradients,
    loss_and_gradients,
    mse_loss,
)
from urbancast.region_store import RegionDatabase
from urbancast.retrieval import Mechanism, RetrievalConfig, retrieve_many


def _geo(b, i):
    return GeoContext(b.distances[i], b.entropies[i], b.values[i])


# -- loss ------------------------------------------------------------------------------

def test_mse_loss_examples():
    assert mse_loss([1, 2], [1, 2]) == 0.0
    assert mse_loss([0, 0], [1, 1]) == 1.0
    assert mse_loss([1, 2, 3], [2, 2, 2]) == pytest.approx(2 / 3, abs=1e-15)
    with pytest.raises(InputError):
        mse_loss([], [])


# -- forward -------------------------------------------------------------------------

def test_zero_projections_give_linear_head():
    model, cfg = tiny_model(0, L=1, h=1)
    for _, arr in model.named_arrays():
        arr[...] = 0.0
    rng = np.random.default_rng(0)
    model.head_weights[...] = rng.normal(size=8)
    model.head_bias[...] = 0.7
    b = random_batch(rng, 1, 5, 8)
    z = b.values[0, 0]
    assert forward(model, z, _geo(b, 0), cfg) == pytest.approx(model.head_weights @ z + 0.7,
                                                                abs=1e-14)


@pytest.mark.parametrize("weighting", ["full", "spatial_only", "entropy_only", "none", "bypass"])
def test_forward_matches_scalar_oracle(weighting):
    rng = np.random.default_rng(1)
    for seed in range(5):
        model, cfg = tiny_model(seed, weighting=weighting, scale=2.0)
        model.label_mean, model.label_std = 3.0, 2.5
        b = random_batch(rng, 1, 5, 8)
        ref = forward_loop(model, b.values[0], b.distances[0], b.entropies[0], cfg)
        assert abs(forward(model, b.values[0, 0], _geo(b, 0), cfg) - ref) <= 1e-10


@pytest.mark.parametrize("block,renorm", [("residual", False), ("residual", True),
                                          ("prenorm_ffn", False)])
def test_single_and_batch_forward_agree(block, renorm):
    rng = np.random.default_rng(2)
    model, cfg = tiny_model(4, block=block, renormalize=renorm)
    model.label_mean, model.label_std = -1.0, 0.5
    b = random_batch(rng, 7, 5, 8)
    batch = predict_batch(model, b, cfg)
    single = [forward(model, b.values[i, 0], _geo(b, i), cfg) for i in range(7)]
    assert np.allclose(batch, single, atol=1e-12, rtol=0)


def test_forward_rejects_wrong_slot_count():
    model, cfg = tiny_model(0)
    b = random_batch(np.random.default_rng(3), 1, 4, 8)
    with pytest.raises(Exception, match="slots"):
        forward(model, b.values[0, 0], _geo(b, 0), cfg)


def test_non_finite_forward_names_layer():
    model, cfg = tiny_model(0)
    model.layers[1].w_out[0, 0] = np.inf
    b = random_batch(np.random.default_rng(4), 3, 5, 8)
    with pytest.raises(NonFiniteForwardError, match="layer 1"):
        gradients(model, b, np.zeros(3), cfg)


def test_value_tokens_are_fixed_across_layers():
    model, cfg = tiny_model(5, L=4)
    b = random_batch(np.random.default_rng(5), 6, 5, 8)
    values = np.asarray(b.values, dtype=np.float64)
    snapshot = values.tobytes()
    _, cache = forward_batch(model, values, batch_weights(b, cfg), cfg)
    assert len(cache.layer_values) == 4
    assert all(v is values for v in cache.layer_values)
    assert values.tobytes() == snapshot


def test_query_perturbation_changes_only_queries():
    # perturbing the query state changes the output but never the value set
    model, cfg = tiny_model(6, L=1)
    b = random_batch(np.random.default_rng(6), 1, 5, 8)
    geo = _geo(b, 0)
    before = geo.value_embeddings.tobytes()
    y1 = forward(model, b.values[0, 0], geo, cfg)
    y2 = forward(model, b.values[0, 0] + 0.1, geo, cfg)
    assert y1 != y2 and geo.value_embeddings.tobytes() == before


def test_translation_invariance_of_prediction():
    db, _ = generate_city(SyntheticCityConfig(rows=5, cols=5))
    moved = RegionDatabase(db.ids, db.centroids + np.array([10_000.0, -2_500.0]), db.embeddings,
                           db.descriptions)
    cfg_r = RetrievalConfig(k=8, n=4, mechanism=Mechanism.LATENT_SIMILARITY)
    ids = db.ids.tolist()
    b1 = GeoBatch.from_contexts(db, retrieve_many(db, ids, cfg_r))
    b2 = GeoBatch.from_contexts(moved, retrieve_many(moved, ids, cfg_r))
    model = init_params(AttentionConfig(d_model=db.dim, heads=2, context_slots=5), 0)
    cfg = AttentionConfig(d_model=db.dim, heads=2, context_slots=5)
    assert np.allclose(predict_batch(model, b1, cfg), predict_batch(model, b2, cfg), atol=1e-12)


# -- predict_batch ---------------------------------------------------------------------

def test_predict_batch_empty_single_and_permutation():
    model, cfg = tiny_model(7)
    b = random_batch(np.random.default_rng(7), 9, 5, 8)
    assert predict_batch(model, b[np.zeros(9, bool)], cfg).shape == (0,)
    assert predict_batch(model, b[3], cfg)[0] == pytest.approx(
        forward(model, b.values[3, 0], _geo(b, 3), cfg), abs=1e-12)
    perm = np.random.default_rng(0).permutation(9)
    assert np.allclose(predict_batch(model, b[perm], cfg), predict_batch(model, b, cfg)[perm],
                       atol=1e-12, rtol=0)


# -- gradients ------------------------------------------------------------------------

def _check_gradients(seed, **kw):
    rng = np.random.default_rng(seed)
    model, cfg = tiny_model(seed, **kw)
    b = random_batch(rng, 6, 5, 8)
    y = rng.normal(size=6)
    analytic = gradients(model, b, y, cfg).flatten()
    numeric = central_differences(lambda p: batch_loss(model.unflatten(p), b, y, cfg),
                                  model.flatten())
    return relative_error(analytic, numeric).max()


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_gradient_check_residual(seed):
    assert _check_gradients(seed) <= 1e-5


@pytest.mark.parametrize("kw", [{"block": "prenorm_ffn"}, {"renormalize": True},
                                {"weighting": "bypass"}, {"weighting": "spatial_only"}])
def test_gradient_check_variants(kw):
    assert _check_gradients(11, **kw) <= 1e-5


def test_stationary_point_has_zero_bias_gradient():
    model, cfg = tiny_model(0)
    model.head_weights[...] = 0.0
    model.head_bias[...] = 0.0
    b = random_batch(np.random.default_rng(8), 4, 5, 8)
    loss, g = loss_and_gradients(model, b, np.zeros(4), cfg)
    assert loss == 0.0
    assert g.head_bias == 0.0 and np.all(g.head_weights == 0.0)


def test_loss_scaling_scales_gradients():
    model, cfg = tiny_model(3)
    rng = np.random.default_rng(9)
    b = random_batch(rng, 5, 5, 8)
    y = rng.normal(size=5)
    g1 = gradients(model, b, y, cfg).flatten()
    g2 = gradients(model, b, y, cfg, loss_scale=2.0).flatten()
    assert np.array_equal(g2, 2.0 * g1)


def test_gradients_reject_empty_batch():
    model, cfg = tiny_model(0)
    b = random_batch(np.random.default_rng(0), 2, 5, 8)
    with pytest.raises(InputError):
        gradients(model, b[np.zeros(2, bool)], np.zeros(0), cfg)


# -- checkpoints -------------------------------------------------------------------------

@pytest.mark.parametrize("kw", [{}, {"block": "prenorm_ffn", "weighting": "entropy_only",
                                     "renormalize": True, "alpha": 0.125}])
def test_checkpoint_round_trip_exact(tmp_path, kw):
    model, cfg = tiny_model(12, **kw)
    model.label_mean, model.label_std = 1.25, 3.5
    path = tmp_path / "m.bin"
    save_checkpoint(path, model, cfg)
    assert path.read_bytes()[:4] == b"UCGT"
    back, cfg2 = load_checkpoint(path, cfg)
    assert cfg2 == cfg
    assert back.flatten().tobytes() == model.flatten().tobytes()
    assert (back.label_mean, back.label_std) == (1.25, 3.5)
    save_checkpoint(tmp_path / "again.bin", back, cfg2)
    assert (tmp_path / "again.bin").read_bytes() == path.read_bytes()


def test_checkpoint_header_validation(tmp_path):
    model, cfg = tiny_model(0)
    path = tmp_path / "m.bin"
    save_checkpoint(path, model, cfg)
    with pytest.raises(CheckpointError):
        load_checkpoint(path, AttentionConfig(d_model=8, heads=2, layers=2, context_slots=6))
    (tmp_path / "bad.bin").write_bytes(b"NOPE" + path.read_bytes()[4:])
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "bad.bin")
    (tmp_path / "short.bin").write_bytes(path.read_bytes()[:-8])
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "short.bin")
