"""Manages the training configuration of the two-step training framework"""

from __future__ import annotations

import logging
from typing import Any

from crpmnet.shared.constants import DEFAULT_TRAIN_CONFIG, ILLUSTRATION_REFINE_WEIGHTS
from crpmnet.shared.exceptions import ConfigError
from crpmnet.shared.validation import check_train_config_schema

logger = logging.getLogger(__name__)


# pylint: disable=too-many-instance-attributes
class TrainConfig:
    """Contains the training configuration as an object"""

    def __init__(self, train_config: dict[str, Any] | None = None) -> None:
        cfg = dict(DEFAULT_TRAIN_CONFIG)
        if train_config:
            check_train_config_schema(train_config)
            cfg.update(train_config)
        if cfg.get("refine-weights") == "illustration":
            # Explicit weights in the same mapping still win over the preset
            for key, value in ILLUSTRATION_REFINE_WEIGHTS.items():
                if not train_config or key not in train_config:
                    cfg[key] = value
        check_train_config_schema(cfg)
        self.config = cfg

        self.lr_step1 = float(cfg["lr1"])
        self.lr_step2 = float(cfg["lr2"])
        self.batch_step1 = int(cfg["batch1"])
        self.batch_step2 = int(cfg["batch2"])
        self.epochs_step1 = int(cfg["epochs1"])
        self.epochs_step2 = int(cfg["epochs2"])
        self.alpha = float(cfg["alpha"])
        self.gamma = float(cfg["gamma"])
        self.w_train = float(cfg["w-train"])
        self.w_error = float(cfg["w-error"])
        self.w_else = float(cfg["w-else"])
        self.per_class_count = int(cfg["per-class"])
        self.max_rate = float(cfg["max-rate"])
        self.seed = int(cfg["seed"])
        self._check_invariants()

    def _check_invariants(self) -> None:
        for name, rate in (("lr1", self.lr_step1), ("lr2", self.lr_step2), ("max-rate", self.max_rate)):
            if not 0 < rate <= 1:
                raise ConfigError(f"{name} must lie in (0, 1], got {rate}")
        for name, weight in (("w-train", self.w_train), ("w-error", self.w_error), ("w-else", self.w_else)):
            if weight <= 0:
                raise ConfigError(f"{name} must be positive, got {weight}")
        if min(self.batch_step1, self.batch_step2, self.per_class_count) < 1:
            raise ConfigError("Batch sizes and the per-class count must be at least 1")

    def as_dict(self) -> dict[str, Any]:
        """The effective configuration, keyed like the YAML file. Used for the model file echo."""
        return {
            "alpha": self.alpha,
            "gamma": self.gamma,
            "lr1": self.lr_step1,
            "lr2": self.lr_step2,
            "batch1": self.batch_step1,
            "batch2": self.batch_step2,
            "epochs1": self.epochs_step1,
            "epochs2": self.epochs_step2,
            "w-train": self.w_train,
            "w-error": self.w_error,
            "w-else": self.w_else,
            "per-class": self.per_class_count,
            "max-rate": self.max_rate,
            "seed": self.seed,
        }

    def echo_line(self) -> str:
        """One line with every hyperparameter, e.g. ``alpha=0.25 gamma=2 lr1=0.005 ...``"""
        return " ".join(f"{key}={value:g}" for key, value in self.as_dict().items())

    @property
    def refine_weights(self) -> tuple[float, float, float]:
        """(w_train, w_error, w_else)"""
        return self.w_train, self.w_error, self.w_else


DEFAULT_TRAIN_SETTINGS = TrainConfig()
