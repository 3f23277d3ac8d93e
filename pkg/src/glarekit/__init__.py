"""Glare segmentation toolkit.

Photometric image representations, a multi-branch encoder-decoder
segmentation network with hand-written forward/backward passes, Otsu
post-thresholding, and a cross-validated representation-ablation
harness.
"""

__version__ = "0.1.0"

from .representations import (
    ContrastParams,
    PixelPlaneSet,
    build_plane_set,
    contrast_map,
    contrast_map_strided,
    luminance,
    photometric_map,
    rescale,
    rgb_to_hsv,
)
from .otsu import binarize, otsu_threshold
from .unet import BranchSpec, Model, UNetConfig, build_model, forward, load_model
from .data import SamplePair, scan_dataset, load_pair, synthesize_glare
from .config import TrainConfig
from .evaluation import class_weights, cross_validate, evaluate, make_folds, train_fold
from .ablation import AblationReport, TABLE_COMBOS, run_ablation

__all__ = [
    "ContrastParams",
    "PixelPlaneSet",
    "build_plane_set",
    "contrast_map",
    "contrast_map_strided",
    "luminance",
    "photometric_map",
    "rescale",
    "rgb_to_hsv",
    "binarize",
    "otsu_threshold",
    "BranchSpec",
    "Model",
    "UNetConfig",
    "build_model",
    "forward",
    "load_model",
    "SamplePair",
    "scan_dataset",
    "load_pair",
    "synthesize_glare",
    "TrainConfig",
    "class_weights",
    "cross_validate",
    "evaluate",
    "make_folds",
    "train_fold",
    "AblationReport",
    "TABLE_COMBOS",
    "run_ablation",
]
