"""Fit sampled functions with isolated jumps: a smooth learner plus one
certified decay-RBF bump per detected jump."""

__version__ = "0.1.0"

from .detect import Dataset, DetectionConfig, JumpDetector, JumpPoint, detect_jumps, estimate_jump_height
from .hybrid import HybridRegressor, eval_hybrid, fit_hybrid, load_model, save_model
from .kernels import DecayKernel, TailBound, estimate_tail_bounds, load_profile_table, make_kernel
from .numerics import Box, ErrorReport, QuadratureConfig, l2_norm, ratio_metrics, rmse
from .singular import SingularNetwork, build_singular_network, certified_l2, certify, eval_singular, seed_scale
from .smooth import GridRBFRegressor, LMRegressor, TrainConfig, fit_grid_rbf, fit_mlp_lm

__all__ = [
    "Box",
    "Dataset",
    "DecayKernel",
    "DetectionConfig",
    "ErrorReport",
    "GridRBFRegressor",
    "HybridRegressor",
    "JumpDetector",
    "JumpPoint",
    "LMRegressor",
    "QuadratureConfig",
    "SingularNetwork",
    "TailBound",
    "TrainConfig",
    "build_singular_network",
    "certified_l2",
    "certify",
    "detect_jumps",
    "estimate_jump_height",
    "estimate_tail_bounds",
    "eval_hybrid",
    "eval_singular",
    "fit_grid_rbf",
    "fit_hybrid",
    "fit_mlp_lm",
    "l2_norm",
    "load_model",
    "load_profile_table",
    "make_kernel",
    "ratio_metrics",
    "rmse",
    "save_model",
    "seed_scale",
]
