"""Binary model checkpoints.

Layout (little-endian): the 4-byte magic ``UCGT``, a fixed header, then every
parameter array as float64 in declaration order (see :mod:`.params`).

Header fields after the magic::

    u32 version, u32 D, u32 heads, u32 layers, u32 slots, u32 d_k, u32 d_v,
    f64 alpha, u8 weighting, u8 flags (bit0 renormalize, bit1 pre-norm block),
    u32 d_ff, f64 label_mean, f64 label_std
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from ..exceptions import CheckpointError
from .config import AttentionConfig, Block
from .params import LayerParams, ModelParams, layer_shapes
from .weights import Weighting

MAGIC = b"UCGT"
VERSION = 1
_HEADER = struct.Struct("<4sIIIIIIIdBBIdd")
_WEIGHTING_CODES = list(Weighting)


def save_checkpoint(path, model: ModelParams, cfg: AttentionConfig) -> None:
    flags = int(cfg.renormalize) | (int(cfg.block is Block.PRENORM_FFN) << 1)
    header = _HEADER.pack(
        MAGIC, VERSION, cfg.d_model, cfg.heads, cfg.layers, cfg.context_slots,
        cfg.d_k, cfg.d_v, float(cfg.alpha), _WEIGHTING_CODES.index(cfg.weighting), flags,
        cfg.d_ff, float(model.label_mean), float(model.label_std),
    )
    with open(path, "wb") as fh:
        fh.write(header)
        for _, arr in model.named_arrays():
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def _config_from_header(fields) -> AttentionConfig:
    (_, _, D, h, L, m, dk, dv, alpha, wcode, flags, dff, _, _) = fields
    if wcode >= len(_WEIGHTING_CODES):
        raise CheckpointError(f"unknown weighting code {wcode}")
    return AttentionConfig(
        d_model=D, heads=h, layers=L, context_slots=m, d_k=dk, d_v=dv, alpha=alpha,
        weighting=_WEIGHTING_CODES[wcode], renormalize=bool(flags & 1),
        block=Block.PRENORM_FFN if flags & 2 else Block.RESIDUAL, d_ff=dff,
    )


def load_checkpoint(path, cfg: AttentionConfig | None = None
                    ) -> tuple[ModelParams, AttentionConfig]:
    """Read a checkpoint; if ``cfg`` is given it must match the stored header."""
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size or raw[:4] != MAGIC:
        raise CheckpointError(f"{path} is not a GeoTransformer checkpoint")
    fields = _HEADER.unpack_from(raw)
    if fields[1] != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {fields[1]}")
    stored = _config_from_header(fields)
    if cfg is not None and cfg != stored:
        raise CheckpointError(f"checkpoint header {stored} does not match config {cfg}")

    shapes = layer_shapes(stored)
    payload = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    need = stored.layers * sum(int(np.prod(s)) for s in shapes.values()) + stored.d_model + 1
    if payload.size != need:
        raise CheckpointError(f"checkpoint holds {payload.size} parameters, header implies {need}")
    pos = 0

    def take(shape):
        nonlocal pos
        size = int(np.prod(shape))
        out = payload[pos:pos + size].reshape(shape).astype(np.float64)
        pos += size
        return out

    layers = [LayerParams(**{name: take(s) for name, s in shapes.items()})
              for _ in range(stored.layers)]
    head_w = take((stored.d_model,))
    head_b = take(())
    model = ModelParams(layers, head_w, head_b, label_mean=fields[12], label_std=fields[13])
    return model, stored
