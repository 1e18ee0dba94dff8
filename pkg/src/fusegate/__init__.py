"""Gated multi-sensor fusion networks (non-gated, feature-gated, group-gated and two-stage)
built on a small reverse-mode autodiff core."""

from .architectures import (
    KINDS,
    FusionModel,
    FusionOverride,
    FusionReport,
    GroupSpec,
    build_fg_gfa,
    build_model,
    build_netgated,
    build_non_gated,
    build_two_stage,
    load_model,
    save_model,
)
from .autodiff import Tensor, backward, gradcheck
from .data import SyntheticDrivingConfig, generate_driving, make_windows, normalize_featurewise
from .errors import (
    ConfigError,
    ContractError,
    DataError,
    DimensionError,
    DivergenceError,
    FusegateError,
    LabelError,
    WindowError,
)
from .harness import ExperimentConfig, RunResult, compare, inspect_weights, load_config, train
from .layers import DEFAULT_TOWER, FC, Conv1D, MaxPool, ReLU, build_tower
from .perturbation import PerturbationSpec, apply_failures, apply_noise

__version__ = "0.1.0"
