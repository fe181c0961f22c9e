"""Python bindings for the geopix segmentation core."""

import json
import os

from ._geopix import (
    CheckpointError,
    ConfigError,
    DivergenceError,
    FormatError,
    IngestionError,
    Model,
    compute_metrics,
    default_config,
    dice_loss,
    entropic_redundancy,
    focal_loss,
    preprocess_geometry,
    ssim_matrix,
    structural_redundancy,
    synth_dataset,
    token_count,
)
from ._geopix import _train

__all__ = [
    "CheckpointError",
    "ConfigError",
    "DivergenceError",
    "FormatError",
    "IngestionError",
    "Model",
    "compute_metrics",
    "default_config",
    "dice_loss",
    "entropic_redundancy",
    "focal_loss",
    "preprocess_geometry",
    "ssim_matrix",
    "structural_redundancy",
    "synth_dataset",
    "token_count",
    "train",
]


def _merge(base, overrides):
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(base.get(key), dict):
            _merge(base[key], value)
        else:
            base[key] = value
    return base


def train(config=None, **overrides):
    """Train a model and return the loss curve as a list of dicts.

    config is a path to a JSON run config or a (partial) dict. Keyword overrides are
    merged on top, e.g. train("configs/desk.json", train={"steps": 10}, output_dir="runs/x").
    """
    doc = {}
    if isinstance(config, (str, os.PathLike)):
        with open(config, encoding="utf-8") as f:
            doc = json.load(f)
    elif config is not None:
        doc = dict(config)
    _merge(doc, overrides)
    return _train(json.dumps(doc))
