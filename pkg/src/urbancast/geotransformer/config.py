from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

from ..exceptions import InputError
from .weights import Weighting


class Block(str, Enum):
    RESIDUAL = "residual"        # query += MultiHead(query)
    PRENORM_FFN = "prenorm_ffn"  # query += MultiHead(LN(query)); query += FFN(LN(query))


class Optimizer(str, Enum):
    SGD = "sgd"
    ADAM = "adam"


@dataclass(frozen=True)
class AttentionConfig:
    """Decoder shape and attention-prior settings.

    ``context_slots`` counts the target plus its retrieved regions. ``d_k``
    and ``d_v`` default to ``d_model // heads``.
    """

    d_model: int = 64
    heads: int = 4
    layers: int = 2
    context_slots: int = 17
    d_k: int | None = None
    d_v: int | None = None
    alpha: float = 0.5
    weighting: Weighting = Weighting.FULL
    renormalize: bool = False
    block: Block = Block.RESIDUAL
    d_ff: int | None = None

    def __post_init__(self):
        set_ = object.__setattr__
        set_(self, "weighting", Weighting(self.weighting))
        set_(self, "block", Block(self.block))
        if self.d_model < 1 or self.heads < 1 or self.layers < 1:
            raise InputError("d_model, heads and layers must be positive")
        if self.context_slots < 1:
            raise InputError("context_slots must be at least 1")
        if self.d_k is None or self.d_v is None:
            if self.d_model % self.heads:
                raise InputError(
                    f"d_model={self.d_model} is not divisible by heads={self.heads}; "
                    "pass d_k and d_v explicitly"
                )
            per_head = self.d_model // self.heads
            if self.d_k is None:
                set_(self, "d_k", per_head)
            if self.d_v is None:
                set_(self, "d_v", per_head)
        if self.d_ff is None:
            set_(self, "d_ff", 2 * self.d_model)
        if not 0.0 <= self.alpha <= 1.0:
            raise InputError("alpha must lie in [0, 1]")

    @property
    def retrieval_size(self) -> int:
        return self.context_slots - 1


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    epochs: int = 100
    batch_size: int | None = None  # None: full batch
    seed: int = 0
    optimizer: Optimizer = Optimizer.ADAM
    standardize_labels: bool = True
    weight_decay: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "optimizer", Optimizer(self.optimizer))
        if not self.learning_rate >= 0:
            raise InputError("learning_rate must be non-negative")
        if self.epochs < 1:
            raise InputError("epochs must be >= 1")
        if self.batch_size is not None and self.batch_size < 1:
            raise InputError("batch_size must be positive")
