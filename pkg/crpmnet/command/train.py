"""
Two-step training: the patch classifier first, then the fusion network on the refined dense map of its dilated
counterpart.
"""

from __future__ import annotations

import logging
from collections.abc import Sequence
from pathlib import Path
from typing import Any

import click
import numpy as np
from click.core import ParameterSource
from click_option_group import optgroup

from crpmnet import LOG_FORMAT, set_log_level
from crpmnet.engine.ctensor import FloatArray
from crpmnet.engine.nets import class_map, predict_scene, transfer_to_dilated
from crpmnet.engine.training import TrainingPixels, held_out_mask, train_step1, train_step2
from crpmnet.output.class_map import write_pgm
from crpmnet.output.metrics import confusion
from crpmnet.output.model_file import ModelFile
from crpmnet.polsar.features import FEATURE_MODES, build_band_features, zscore_normalize
from crpmnet.polsar.scene import CovarianceScene, load_c3
from crpmnet.shared import utils
from crpmnet.shared.constants import DEFAULT_TRAIN_CONFIG
from crpmnet.shared.exceptions import TrainingPreconditionError
from crpmnet.shared.train_config import TrainConfig

logger = logging.getLogger(__name__)

# click parameter name -> key of the training configuration file
TRAIN_FLAGS = {
    "lr1": "lr1",
    "batch1": "batch1",
    "epochs1": "epochs1",
    "alpha": "alpha",
    "gamma": "gamma",
    "lr2": "lr2",
    "batch2": "batch2",
    "epochs2": "epochs2",
    "refine_weights": "refine-weights",
    "w_train": "w-train",
    "w_error": "w-error",
    "w_else": "w-else",
    "per_class": "per-class",
    "max_rate": "max-rate",
    "seed": "seed",
}


@click.command(context_settings=dict(max_content_width=160), short_help="Train the patch classifier and CRPM-Net")
@click.option(
    "-d",
    "--data",
    type=click.Path(exists=True, dir_okay=False),
    multiple=True,
    required=True,
    help="Labeled C3 scene. Repeat to stack co-registered bands; labels come from the first.",
)
@click.option(
    "-l",
    "--labels",
    type=click.Path(exists=True, dir_okay=False),
    required=False,
    help="Label PGM. Replaces the labels stored in the scene.",
)
@click.option(
    "-o",
    "--out",
    "output_directory",
    type=click.Path(file_okay=False),
    required=True,
    help="Output directory for models, maps, logs and the training summary.",
)
@click.option(
    "-c",
    "--config",
    "config_file",
    type=click.Path(exists=True, dir_okay=False),
    required=False,
    help="YAML training configuration. Command line flags override it.",
)
@optgroup.group("Step 1 Options", help="Patch classifier trained with the focal loss")
@optgroup.option("--lr1", type=float, default=DEFAULT_TRAIN_CONFIG["lr1"], show_default=True, help="Learning rate.")
@optgroup.option("--batch1", type=int, default=DEFAULT_TRAIN_CONFIG["batch1"], show_default=True, help="Batch size.")
@optgroup.option("--epochs1", type=int, default=DEFAULT_TRAIN_CONFIG["epochs1"], show_default=True, help="Epochs.")
@optgroup.option("--alpha", type=float, default=DEFAULT_TRAIN_CONFIG["alpha"], show_default=True, help="Focal alpha.")
@optgroup.option("--gamma", type=float, default=DEFAULT_TRAIN_CONFIG["gamma"], show_default=True, help="Focal gamma.")
@optgroup.group("Step 2 Options", help="Fusion network trained on the refined dense map")
@optgroup.option("--lr2", type=float, default=DEFAULT_TRAIN_CONFIG["lr2"], show_default=True, help="Learning rate.")
@optgroup.option("--batch2", type=int, default=DEFAULT_TRAIN_CONFIG["batch2"], show_default=True, help="Tiles per batch.")
@optgroup.option("--epochs2", type=int, default=DEFAULT_TRAIN_CONFIG["epochs2"], show_default=True, help="Epochs.")
@optgroup.option(
    "--refine-weights",
    "refine_weights",
    type=click.Choice(["experiments", "illustration"]),
    default=DEFAULT_TRAIN_CONFIG["refine-weights"],
    show_default=True,
    help="Preset of the refined map loss weights.",
)
@optgroup.option(
    "--w-train",
    "w_train",
    type=float,
    default=DEFAULT_TRAIN_CONFIG["w-train"],
    show_default=True,
    help="Weight of training pixels the dense map got right.",
)
@optgroup.option(
    "--w-error",
    "w_error",
    type=float,
    default=DEFAULT_TRAIN_CONFIG["w-error"],
    show_default=True,
    help="Weight of training pixels the dense map got wrong.",
)
@optgroup.option(
    "--w-else",
    "w_else",
    type=float,
    default=DEFAULT_TRAIN_CONFIG["w-else"],
    show_default=True,
    help="Weight of every other pixel.",
)
@optgroup.group("Sampling Options", help="")
@optgroup.option(
    "--per-class",
    "per_class",
    type=int,
    default=DEFAULT_TRAIN_CONFIG["per-class"],
    show_default=True,
    help="Training pixels per class.",
)
@optgroup.option(
    "--max-rate",
    "max_rate",
    type=float,
    default=DEFAULT_TRAIN_CONFIG["max-rate"],
    show_default=True,
    help="Largest share of a class that may be sampled.",
)
@optgroup.option("--seed", type=int, default=DEFAULT_TRAIN_CONFIG["seed"], show_default=True, help="Random seed.")
@optgroup.group("Other Options", help="")
@optgroup.option(
    "--stop-after", "stop_after", type=click.Choice(["cs"]), required=False, help="Stop after the first step."
)
@optgroup.option(
    "--features",
    "feature_mode",
    type=click.Choice(FEATURE_MODES),
    default="complex",
    show_default=True,
    help="Complex 6-channel features, or 9 real channels with zero imaginary parts.",
)
@click.option("-v", "--verbose", "verbosity", help="Log verbosity level.", count=True)
@click.pass_context
@utils.exit_on_error
def train(
    ctx: click.Context,
    data: tuple[str, ...],
    labels: str | None,
    output_directory: str,
    config_file: str | None,
    stop_after: str | None,
    feature_mode: str,
    verbosity: int,
    **flags: Any,
) -> None:
    """
    Train the patch classifier on sampled pixels, transfer it to the dilated network, refine the dilated dense map
    at the training pixels and train CRPM-Net against it. Writes cs.model, crpm.model, the dense and refined maps,
    normalization.json, train.log and train-summary.json to the output directory.
    """
    set_log_level(verbosity)
    train_config = TrainConfig(overlay_flags(ctx, config_file, flags))
    click.echo(train_config.echo_line())

    output_path = Path(output_directory)
    output_path.mkdir(parents=True, exist_ok=True)
    handler, previous_level = attach_training_log(output_path / "train.log")
    try:
        scene = load_c3(data[0], label_path=labels)
        extra_bands = [load_c3(path) for path in data[1:]]
        summary = run_training(scene, output_path, train_config, feature_mode, stop_after, extra_bands)
    finally:
        detach_training_log(handler, previous_level)
    for key, value in summary.items():
        click.echo(f"{key}={value}")
    utils.print_green(f"Training results written to {output_directory}")


def overlay_flags(ctx: click.Context, config_file: str | None, flags: dict[str, Any]) -> dict[str, Any]:
    """The YAML file over the defaults, then every flag given on the command line over both"""
    cfg = utils.read_yaml_file(config_file) if config_file else {}
    for param, key in TRAIN_FLAGS.items():
        if ctx.get_parameter_source(param) == ParameterSource.COMMANDLINE:
            cfg[key] = flags[param]
    return cfg


def attach_training_log(path: Path) -> tuple[logging.FileHandler, int]:
    """
    Record every INFO message of the run in ``path``, whatever the console verbosity. Returns the handler and the
    package logger's previous level, for detach_training_log.
    """
    handler = logging.FileHandler(path, mode="w", encoding="utf-8")
    handler.setLevel(logging.INFO)
    handler.setFormatter(logging.Formatter(LOG_FORMAT))
    package_logger = logging.getLogger("crpmnet")
    previous_level = package_logger.level
    package_logger.addHandler(handler)
    if package_logger.getEffectiveLevel() > logging.INFO:
        package_logger.setLevel(logging.INFO)
    return handler, previous_level


def detach_training_log(handler: logging.FileHandler, previous_level: int) -> None:
    package_logger = logging.getLogger("crpmnet")
    package_logger.removeHandler(handler)
    package_logger.setLevel(previous_level)
    handler.close()


def _accuracy(predicted: FloatArray, labels: Any, mask: Any, class_count: int) -> float | None:
    """OA of 0-based predictions against 1..K labels over ``mask``; None when the mask is empty"""
    if not mask.any():
        return None
    return confusion(predicted + 1, np.where(mask, labels, 0), class_count).overall_accuracy()


def _pixel_mask(shape: tuple[int, int], pixels: TrainingPixels) -> Any:
    mask = np.zeros(shape, dtype=bool)
    mask[pixels.rows, pixels.cols] = True
    return mask


def run_training(
    scene: CovarianceScene,
    output_path: Path,
    train_config: TrainConfig,
    feature_mode: str = "complex",
    stop_after: str | None = None,
    extra_bands: Sequence[CovarianceScene] = (),
) -> dict[str, Any]:
    """
    Use this method as a library to run both training steps and write their artifacts. Returns the summary.
    ``extra_bands`` are co-registered scenes whose features are stacked after the labeled scene's.
    """
    if scene.labels is None:
        raise TrainingPreconditionError("The scene carries no labels; pass --labels or a labeled C3 container")
    feature_scene = zscore_normalize(build_band_features([scene, *extra_bands], feature_mode))
    features = feature_scene.features
    if feature_scene.stats is not None:
        feature_scene.stats.save(output_path / "normalization.json")

    step1 = train_step1(features, scene.labels, scene.class_count, train_config)
    config_echo = train_config.as_dict()
    ModelFile(step1.network, feature_mode, feature_scene.stats, config_echo, train_config.seed).save(
        output_path / "cs.model"
    )
    held_out = held_out_mask(scene.labels, step1.pixels)
    summary: dict[str, Any] = {
        "feature_mode": feature_mode,
        "training_pixels": len(step1.pixels),
        "held_out_pixels": int(held_out.sum()),
        "step1_final_loss": step1.epoch_losses[-1] if step1.epoch_losses else None,
    }

    if stop_after == "cs":
        predicted = class_map(predict_scene(transfer_to_dilated(step1.network), features))
        write_pgm(output_path / "dilated-map.pgm", predicted + 1)
        summary["dilated_held_out_oa"] = _accuracy(predicted, scene.labels, held_out, scene.class_count)
        logger.info("Stopped after step 1: dilated held-out OA %s", summary["dilated_held_out_oa"])
        utils.write_json_to_file(str(output_path / "train-summary.json"), summary)
        return summary

    step2 = train_step2(features, step1.network, step1.pixels, train_config)
    ModelFile(step2.network, feature_mode, feature_scene.stats, config_echo, train_config.seed).save(
        output_path / "crpm.model"
    )
    write_pgm(output_path / "dilated-map.pgm", step2.predicted + 1)
    write_pgm(output_path / "refined-map.pgm", step2.refined.targets + 1)

    crpm_predicted = class_map(predict_scene(step2.network, features))
    write_pgm(output_path / "crpm-map.pgm", crpm_predicted + 1)
    trained = _pixel_mask(scene.labels.shape, step1.pixels)
    misclassified = step2.predicted != step2.refined.targets
    at_error = trained & misclassified
    summary.update(
        {
            "dilated_held_out_oa": _accuracy(step2.predicted, scene.labels, held_out, scene.class_count),
            "crpm_held_out_oa": _accuracy(crpm_predicted, scene.labels, held_out, scene.class_count),
            "pixels_at_w_train": int((trained & ~misclassified).sum()),
            "pixels_at_w_error": int(at_error.sum()),
            "w_error_accuracy_before": _accuracy(step2.predicted, scene.labels, at_error, scene.class_count),
            "w_error_accuracy_after": _accuracy(crpm_predicted, scene.labels, at_error, scene.class_count),
            "step2_final_loss": step2.epoch_losses[-1] if step2.epoch_losses else None,
        }
    )
    logger.info(
        "Held-out OA: dilated %s, crpm %s", summary["dilated_held_out_oa"], summary["crpm_held_out_oa"]
    )
    utils.write_json_to_file(str(output_path / "train-summary.json"), summary)
    return summary
