"""Validate YAML/JSON formatted configuration and sidecars, such as the training config, the normalization stats and
the model file header."""

from __future__ import annotations

import logging
from typing import Any

from schema import And, Optional, Or, Schema, SchemaError, Use

from crpmnet.shared.exceptions import ConfigError, ModelFormatError

logger = logging.getLogger(__name__)

_positive = And(Use(float), lambda v: v > 0)
_rate = And(Use(float), lambda v: 0 < v <= 1)
_count = And(int, lambda v: v >= 0)

TRAIN_CONFIG_SCHEMA = Schema(
    {
        Optional("lr1"): _rate,
        Optional("lr2"): _rate,
        Optional("batch1"): And(int, lambda v: v >= 1),
        Optional("batch2"): And(int, lambda v: v >= 1),
        Optional("epochs1"): _count,
        Optional("epochs2"): _count,
        Optional("alpha"): _rate,
        Optional("gamma"): And(Use(float), lambda v: v >= 0),
        Optional("refine-weights"): Or("experiments", "illustration"),
        Optional("w-train"): _positive,
        Optional("w-error"): _positive,
        Optional("w-else"): _positive,
        Optional("per-class"): And(int, lambda v: v >= 1),
        Optional("max-rate"): _rate,
        Optional("seed"): int,
    }
)

NORMALIZATION_STATS_SCHEMA = Schema(
    {
        str: {
            "mu_re": Use(float),
            "mu_im": Use(float),
            "sigma": And(Use(float), lambda v: v > 0),
        }
    }
)

PALETTE_SCHEMA = Schema({str: And([And(int, lambda v: 0 <= v <= 255)], lambda rgb: len(rgb) == 3)})

MODEL_HEADER_SCHEMA = Schema(
    {
        "kind": Or("cs", "dilated", "crpm"),
        "class_count": And(int, lambda v: v >= 2),
        "input_channels": And(int, lambda v: v >= 1),
        "feature_mode": Or("complex", "real"),
        "layers": [dict],
        "taps": {str: str},
        "tensors": [{"name": str, "shape": [int]}],
        "frozen": [str],
        "normalization": Or(None, dict),
        "train_config": Or(None, dict),
        "seed": Or(None, int),
    }
)


def check(conf_schema: Schema, conf: Any) -> bool:
    """
    Validates a user-supplied mapping vs a defined schema.
    :param conf_schema: The Schema object that defines the required structure.
    :param conf: The user-supplied mapping to validate against the required structure.
    """
    try:
        conf_schema.validate(conf)
        return True
    except SchemaError as schema_error:
        logger.critical(schema_error.code)
        return False


def check_train_config_schema(cfg: dict[str, Any]) -> bool:
    """Determine whether or not the training configuration meets the required format"""
    if check(TRAIN_CONFIG_SCHEMA, cfg):
        return True
    raise ConfigError("The training configuration has an unexpected key or an out-of-range value.")


def check_normalization_stats_schema(cfg: dict[str, Any]) -> bool:
    """Determine whether or not a normalization sidecar meets the required format"""
    if check(NORMALIZATION_STATS_SCHEMA, cfg):
        return True
    raise ConfigError("The normalization stats sidecar must map channel names to mu_re, mu_im and a positive sigma.")


def check_palette_schema(cfg: dict[str, Any]) -> bool:
    """Determine whether or not a palette sidecar maps class names to RGB triples"""
    if check(PALETTE_SCHEMA, cfg):
        return True
    raise ConfigError("The palette must map class indices to [r, g, b] triples in 0..255.")


def check_model_header_schema(cfg: dict[str, Any]) -> bool:
    """Determine whether or not a model file header is complete"""
    if check(MODEL_HEADER_SCHEMA, cfg):
        return True
    raise ModelFormatError("The model file header is incomplete or malformed.")
