"""GeoTransformer decoder: cross-attention with spatial and entropy priors."""

from .attention import GeoContext, geo_attention, multi_head_layer, softmax
from .checkpoint import load_checkpoint, save_checkpoint
from .config import AttentionConfig, Block, Optimizer, TrainConfig
from .estimator import GeoTransformerRegressor, MLPBaselineRegressor
from .mlp import MLPParams, init_mlp, mlp_forward, mlp_predict, train_mlp
from .model import (
    batch_loss,
    forward,
    forward_batch,
    gradients,
    loss_and_gradients,
    mse_loss,
    predict_batch,
)
from .params import LayerParams, ModelParams, init_params
from .training import Adam, SGD, train
from .weights import (
    Weighting,
    combined_weights,
    entropy_weights,
    prior_weights,
    spatial_weights,
)
