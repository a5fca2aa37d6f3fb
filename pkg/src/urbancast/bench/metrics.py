from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from ..exceptions import DimensionError, InputError


@dataclass(frozen=True)
class RegressionMetrics:
    mse: float
    mae: float
    r2: float  # -inf when labels are constant and predictions miss them

    @property
    def r2_defined(self) -> bool:
        return math.isfinite(self.r2)

    def to_json(self) -> dict:
        out = asdict(self)
        out["r2_defined"] = self.r2_defined
        return out


def metrics(predictions, labels) -> RegressionMetrics:
    p = np.asarray(predictions, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if p.shape != y.shape or p.ndim != 1:
        raise DimensionError(f"predictions {p.shape} and labels {y.shape} differ")
    if p.size == 0:
        raise InputError("metrics need at least one prediction")
    err = p - y
    ss_res = float(np.sum(err ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0.0:
        r2 = 1.0 if ss_res == 0.0 else -math.inf
    else:
        r2 = 1.0 - ss_res / ss_tot
    return RegressionMetrics(mse=ss_res / p.size, mae=float(np.mean(np.abs(err))), r2=r2)


def retrieval_precision(contexts, relevant: dict) -> float:
    """Mean fraction of each retrieved context set that is planted-relevant."""
    scores = [len(set(c.ids) & relevant.get(c.target_id, frozenset())) / len(c.ids)
              for c in contexts if len(c.ids)]
    return float(np.mean(scores)) if scores else 0.0
