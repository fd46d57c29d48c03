"""Canonical-correlated autoencoder for multi-label classification, in numpy."""

from .data import (
    MISSING,
    NEG,
    POS,
    MultiLabelDataset,
    load_dataset,
    mask_labels,
    save_dataset,
    split,
    synth_correlated,
)
from .losses import LabelSets, latent_grads, latent_loss, output_grad, output_loss
from .metrics import MetricsReport, confusion, evaluate, report
from .model import (
    C2AEModel,
    TrainConfig,
    TrainHistory,
    calibrate_threshold,
    embed_labels,
    fit,
    load_model,
    nearest_label_neighbors,
    predict_labels,
    predict_scores,
    save_model,
    train,
)

__version__ = "0.1.0"
