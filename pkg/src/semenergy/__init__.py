"""Semantic-driven energy-based out-of-distribution detection at desk scale."""

from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .clusters import ClusterMeans, ema_update, init_means
from .data import Dataset, Sample, SyntheticSpec, generate
from .losses import (
    FocalConfig,
    HingeLossValue,
    LossValue,
    MarginConfig,
    cluster_focal_loss,
    cross_entropy,
    ii_loss,
    joint_objective,
    semantic_energy_hinge_loss,
)
from .metrics import EvalReport, ScoredSample, aupr, auroc, evaluate, fpr_at_tpr, overlap_coefficient
from .network import (
    ForwardTrace,
    NetworkConfig,
    NetworkState,
    ParameterGradients,
    backward,
    forward,
    init_network,
    sgd_step,
)
from .scoring import (
    Detection,
    DetectorThreshold,
    EnergyScore,
    LayerEnergyConfig,
    detect,
    free_energy,
    multilayer_semantic_energy,
    scaled_logits,
    select_threshold,
    semantic_energy,
    softmax_score,
)
from .train import TrainConfig, TrainResult, train

__version__ = "0.1.0"
