"""Sparse-to-dense depth completion: a topology estimator (ScaffNet) trained on
synthetic depth and an image-guided refinement network (FusionNet) trained
without ground truth."""

from .checkpoint import Checkpoint
from .config import RunConfig, load_config, parse_config_text
from .data import Dataset, DatasetManifest, generate_dataset
from .geometry import Intrinsics, Pose
from .losses import LossReport, LossWeights
from .metrics import MetricSet, evaluate
from .nets import FusionNet, PoseNet, ScaffNet
from .pipeline import (AblationReport, CompletionModel, infer, run_ablation, train_fusionnet,
                       train_scaffnet)
from .sampling import SamplingStrategy, SparseDepthMap, make_sparse
from .scenegen import FrameTriplet, SceneConfig, generate_scene
from .spp import SPP, SppConfig

__version__ = "0.1.0"
