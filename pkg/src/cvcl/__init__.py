"""Contrastive multiview clustering with per-view autoencoders, in numpy."""
from cvcl.data import MultiviewDataset, SyntheticSpec, generate_synthetic, load_dataset, normalize, save_dataset
from cvcl.errors import CvclError
from cvcl.kernels import BACKEND
from cvcl.losses import LossWeights
from cvcl.metrics import MetricsReport, evaluate, predict_labels
from cvcl.model import CvclModel, ModelConfig, load_checkpoint, save_checkpoint
from cvcl.trainer import TrainConfig, TrainReport, run_full

__version__ = "0.1.0"
