"""Patch-based convolutional pixel labeling for road and urban scenes."""

from .data import LabeledImage, PatchPool, Weighting, build_training_pool
from .errors import PatchNetError
from .evaluation import BinaryEval, confusion_matrix, evaluate_labelmap, max_f, orr_arr
from .inference import label_image, overlay
from .network import Model, NetworkSpec, build, load, road_spec, tiny_spec, urban_spec
from .postproc import SegmentationParams, fuse_labels, segment
from .synth import generate_synthetic_scene
from .trainer import TrainConfig, evaluate_pool, train

__all__ = [
    "BinaryEval", "LabeledImage", "Model", "NetworkSpec", "PatchNetError", "PatchPool",
    "SegmentationParams", "TrainConfig", "Weighting", "build", "build_training_pool",
    "confusion_matrix", "evaluate_labelmap", "evaluate_pool", "fuse_labels",
    "generate_synthetic_scene", "label_image", "load", "max_f", "orr_arr", "overlay",
    "road_spec", "segment", "tiny_spec", "train", "urban_spec",
]
