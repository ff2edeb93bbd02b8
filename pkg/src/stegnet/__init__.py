"""Spatial-domain steganalysis CNN built on a small numpy autograd core."""

__version__ = "0.1.0"

from .checkpoint import load_checkpoint, load_checkpoint_file, save_checkpoint, save_checkpoint_file
from .network import NetConfig, build_network, init_xavier
from .srm import build_filter_bank
from .stego import EmbedParams, lsbm_embed
from .trainer import TrainConfig, evaluate, train

__all__ = [
    "EmbedParams",
    "TrainConfig",
    "NetConfig",
    "build_filter_bank",
    "build_network",
    "evaluate",
    "init_xavier",
    "load_checkpoint",
    "load_checkpoint_file",
    "lsbm_embed",
    "save_checkpoint",
    "save_checkpoint_file",
    "train",
]
