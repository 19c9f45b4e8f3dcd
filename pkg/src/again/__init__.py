"""Inductive semi-supervised node classification with sampled attention
aggregation and an adversarially matched Gaussian embedding prior."""

from .adversary import PriorConfig, discriminator_loss, generator_loss, sample_prior
from .evaluation import (
    GapReport,
    RobustnessReport,
    evaluate_accuracy,
    performance_gap,
    robustness_sweep,
    silhouette,
)
from .graph import (
    AttributedGraph,
    DataError,
    NodeSplit,
    NoiseSpec,
    ParseError,
    inject_feature_noise,
    load_fixed_split,
    load_graph,
    make_split,
    save_graph,
    save_split,
)
from .model import ConfigError, EncoderConfig, classify, encode, predict
from .params import (
    CheckpointError,
    ParameterSet,
    init_parameters,
    load_checkpoint,
    save_checkpoint,
)
from .sampling import exhaustive_neighborhood, sample_neighborhood
from .training import (
    MODES,
    TrainConfig,
    TrainLog,
    build_training_view,
    default_train_config,
    train,
)

__version__ = "0.1.0"

__all__ = [
    "AttributedGraph",
    "CheckpointError",
    "ConfigError",
    "DataError",
    "EncoderConfig",
    "GapReport",
    "MODES",
    "NodeSplit",
    "NoiseSpec",
    "ParameterSet",
    "ParseError",
    "PriorConfig",
    "RobustnessReport",
    "TrainConfig",
    "TrainLog",
    "build_training_view",
    "classify",
    "default_train_config",
    "discriminator_loss",
    "encode",
    "evaluate_accuracy",
    "exhaustive_neighborhood",
    "generator_loss",
    "init_parameters",
    "inject_feature_noise",
    "load_checkpoint",
    "load_fixed_split",
    "load_graph",
    "make_split",
    "performance_gap",
    "predict",
    "robustness_sweep",
    "sample_neighborhood",
    "sample_prior",
    "save_checkpoint",
    "save_graph",
    "save_split",
    "silhouette",
    "train",
]
