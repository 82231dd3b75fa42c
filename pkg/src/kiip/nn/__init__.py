"""From-scratch float64 3D CNNs: FG, FG-OL and OL-E2E."""
from .checkpoint import load_model, save_model
from .layers import Conv3D, Dense, cross_entropy, softmax
from .models import FG, FG_OL, KINDS, OL_E2E, Architecture, ClassifierModel, Network
from .train import (
    LabeledGrid,
    TrainConfig,
    TrainReport,
    fg_nearest_neighbor,
    forward,
    nearest_label,
    predict,
    pretrain_fg,
    train,
)
