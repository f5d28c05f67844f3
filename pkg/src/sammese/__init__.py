"""Multi-modal salient object detection built on a frozen promptable
segmentation backbone: complementary fusion, semantic-gated adapters,
automatic semantic-geometric prompts, dual BCE+Dice supervision, and the
standard SOD metric suite."""

from .config import RunConfig, build_config, toy_config
from .data import SamplePair, load_dataset, make_synthetic_dataset, preprocess
from .estimator import SammeseSaliency
from .losses import LossReport, bce_loss, dice_loss, total_loss
from .metrics import EvalResult, e_measure, evaluate_dataset, f_measure, mae, s_measure
from .model import Sammese
from .prompts import GeometricPrompts, derive_geometric
from .registry import ParameterRegistry
from .training import load_checkpoint, predict, save_checkpoint, train

__all__ = [
    "RunConfig", "build_config", "toy_config",
    "SamplePair", "load_dataset", "make_synthetic_dataset", "preprocess",
    "SammeseSaliency",
    "LossReport", "bce_loss", "dice_loss", "total_loss",
    "EvalResult", "mae", "f_measure", "s_measure", "e_measure", "evaluate_dataset",
    "Sammese",
    "GeometricPrompts", "derive_geometric",
    "ParameterRegistry",
    "train", "predict", "save_checkpoint", "load_checkpoint",
]

__version__ = "0.1.0"
