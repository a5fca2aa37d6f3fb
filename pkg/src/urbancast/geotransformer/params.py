"""Parameter containers for the decoder.

Array declaration order (used by checkpoints and flattening) per layer is
``w_query, w_key, w_value, key_base, w_out`` followed, for the pre-norm
block only, by ``ln1_gain, ln1_bias, ln2_gain, ln2_bias, ffn_in, ffn_in_bias,
ffn_out, ffn_out_bias``; after all layers come ``head_weights, head_bias``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields

import numpy as np

from .config import AttentionConfig, Block

CORE_FIELDS = ("w_query", "w_key", "w_value", "key_base", "w_out")
PRENORM_FIELDS = ("ln1_gain", "ln1_bias", "ln2_gain", "ln2_bias",
                  "ffn_in", "ffn_in_bias", "ffn_out", "ffn_out_bias")


@dataclass
class LayerParams:
    w_query: np.ndarray   # (h, D, d_k)
    w_key: np.ndarray     # (h, D, d_k)
    w_value: np.ndarray   # (h, D, d_v)
    key_base: np.ndarray  # (m, D) trainable keys, shared by all heads of the layer
    w_out: np.ndarray     # (h * d_v, D)
    ln1_gain: np.ndarray | None = None
    ln1_bias: np.ndarray | None = None
    ln2_gain: np.ndarray | None = None
    ln2_bias: np.ndarray | None = None
    ffn_in: np.ndarray | None = None       # (D, d_ff)
    ffn_in_bias: np.ndarray | None = None  # (d_ff,)
    ffn_out: np.ndarray | None = None      # (d_ff, D)
    ffn_out_bias: np.ndarray | None = None  # (D,)

    def named_arrays(self):
        for f in fields(self):
            arr = getattr(self, f.name)
            if arr is not None:
                yield f.name, arr


@dataclass
class ModelParams:
    layers: list[LayerParams]
    head_weights: np.ndarray  # (D,)
    head_bias: np.ndarray     # 0-d
    # label standardization applied during training; not trainable
    label_mean: float = 0.0
    label_std: float = 1.0
    extra: dict = field(default_factory=dict)

    def named_arrays(self):
        for i, layer in enumerate(self.layers):
            for name, arr in layer.named_arrays():
                yield f"layers.{i}.{name}", arr
        yield "head_weights", self.head_weights
        yield "head_bias", self.head_bias

    def arrays(self) -> dict[str, np.ndarray]:
        return dict(self.named_arrays())

    def copy(self) -> "ModelParams":
        return map_params(self, np.array)

    def zeros_like(self) -> "ModelParams":
        return map_params(self, np.zeros_like)

    def flatten(self) -> np.ndarray:
        return np.concatenate([a.ravel() for _, a in self.named_arrays()])

    def unflatten(self, flat: np.ndarray) -> "ModelParams":
        out = self.copy()
        offset = 0
        for _, arr in out.named_arrays():
            size = arr.size
            arr[...] = flat[offset:offset + size].reshape(arr.shape)
            offset += size
        if offset != len(flat):
            raise ValueError(f"flat vector has {len(flat)} entries, model needs {offset}")
        return out

    @property
    def size(self) -> int:
        return sum(a.size for _, a in self.named_arrays())


def map_params(model: ModelParams, fn) -> ModelParams:
    layers = [
        LayerParams(**{f.name: (None if getattr(lp, f.name) is None else fn(getattr(lp, f.name)))
                       for f in fields(lp)})
        for lp in model.layers
    ]
    return ModelParams(layers, fn(model.head_weights), fn(model.head_bias),
                       model.label_mean, model.label_std, dict(model.extra))


def layer_shapes(cfg: AttentionConfig) -> dict[str, tuple[int, ...]]:
    D, h, m = cfg.d_model, cfg.heads, cfg.context_slots
    shapes = {
        "w_query": (h, D, cfg.d_k),
        "w_key": (h, D, cfg.d_k),
        "w_value": (h, D, cfg.d_v),
        "key_base": (m, D),
        "w_out": (h * cfg.d_v, D),
    }
    if cfg.block is Block.PRENORM_FFN:
        shapes.update({
            "ln1_gain": (D,), "ln1_bias": (D,), "ln2_gain": (D,), "ln2_bias": (D,),
            "ffn_in": (D, cfg.d_ff), "ffn_in_bias": (cfg.d_ff,),
            "ffn_out": (cfg.d_ff, D), "ffn_out_bias": (D,),
        })
    return shapes


_FAN_IN = {
    "w_query": lambda c: c.d_model, "w_key": lambda c: c.d_model,
    "w_value": lambda c: c.d_model, "key_base": lambda c: c.d_model,
    "w_out": lambda c: c.heads * c.d_v,
    "ffn_in": lambda c: c.d_model, "ffn_in_bias": lambda c: c.d_model,
    "ffn_out": lambda c: c.d_ff, "ffn_out_bias": lambda c: c.d_ff,
}


def init_params(cfg: AttentionConfig, seed=0) -> ModelParams:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) everywhere; layer-norm gains 1, biases 0."""
    rng = np.random.default_rng(seed)
    layers = []
    for _ in range(cfg.layers):
        arrays = {}
        for name, shape in layer_shapes(cfg).items():
            if name.endswith("_gain"):
                arrays[name] = np.ones(shape)
            elif name.startswith("ln"):
                arrays[name] = np.zeros(shape)
            else:
                bound = 1.0 / np.sqrt(_FAN_IN[name](cfg))
                arrays[name] = rng.uniform(-bound, bound, size=shape)
        layers.append(LayerParams(**arrays))
    bound = 1.0 / np.sqrt(cfg.d_model)
    head_w = rng.uniform(-bound, bound, size=cfg.d_model)
    head_b = np.array(rng.uniform(-bound, bound))
    return ModelParams(layers, head_w, head_b)


def check_shapes(model: ModelParams, cfg: AttentionConfig) -> None:
    from ..exceptions import DimensionError

    if len(model.layers) != cfg.layers:
        raise DimensionError(f"model has {len(model.layers)} layers, config says {cfg.layers}")
    expected = layer_shapes(cfg)
    for i, lp in enumerate(model.layers):
        got = dict(lp.named_arrays())
        if set(got) != set(expected):
            raise DimensionError(f"layer {i} has arrays {sorted(got)}, expected {sorted(expected)}")
        for name, shape in expected.items():
            if got[name].shape != shape:
                raise DimensionError(f"layer {i} {name}: shape {got[name].shape}, expected {shape}")
    if model.head_weights.shape != (cfg.d_model,) or np.shape(model.head_bias) != ():
        raise DimensionError("prediction head has the wrong shape")
