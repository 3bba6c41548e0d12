"""
Classify a whole scene with a trained model.
"""

from __future__ import annotations

import logging
import time
from pathlib import Path

import click
import numpy as np

from crpmnet import set_log_level
from crpmnet.engine.ctensor import FloatArray
from crpmnet.engine.nets import NETWORK_KINDS, Network, class_map, predict_scene, transfer_to_dilated
from crpmnet.output.class_map import colorize, load_palette, write_pgm, write_ppm
from crpmnet.output.model_file import ModelFile
from crpmnet.polsar.features import build_band_features, zscore_normalize
from crpmnet.polsar.scene import load_c3
from crpmnet.shared import utils
from crpmnet.shared.exceptions import IncompatibleDataError

logger = logging.getLogger(__name__)


@click.command(short_help="Classify a scene with a trained model")
@click.option("-m", "--model", "model_file", type=click.Path(exists=True, dir_okay=False), required=True, help="Model file.")
@click.option(
    "-d",
    "--data",
    type=click.Path(exists=True, dir_okay=False),
    multiple=True,
    required=True,
    help="C3 scene. Repeat for co-registered bands, in the order the model was trained on.",
)
@click.option(
    "-n",
    "--net",
    "net_kind",
    type=click.Choice(NETWORK_KINDS),
    required=False,
    help="Network to run. Defaults to the model's own; a cs model also runs as dilated.",
)
@click.option("-o", "--out", "output_file", type=click.Path(dir_okay=False), required=True, help="Class map PGM.")
@click.option("--ppm", "ppm_file", type=click.Path(dir_okay=False), required=False, help="Colour rendering of the map.")
@click.option(
    "--palette",
    "palette_file",
    type=click.Path(exists=True, dir_okay=False),
    required=False,
    help="JSON palette of class -> RGB for --ppm. The packaged palette is used by default.",
)
@click.option(
    "--scores",
    "scores_file",
    type=click.Path(dir_okay=False),
    required=False,
    help="Dump the [classes, H, W] probability tensor as a .npy file.",
)
@click.option("-v", "--verbose", "verbosity", help="Log verbosity level.", count=True)
@utils.exit_on_error
def predict(
    model_file: str,
    data: tuple[str, ...],
    net_kind: str | None,
    output_file: str,
    ppm_file: str | None,
    palette_file: str | None,
    scores_file: str | None,
    verbosity: int,
) -> None:
    """
    Classify every pixel of a scene. cs runs the patch classifier row by row; dilated and crpm run tiled dense
    inference. Prints the wall time as pred_time_s=<seconds> and writes classes 1..K to the PGM.
    """
    set_log_level(verbosity)
    model = ModelFile.load(model_file)
    network = select_network(model.network, net_kind)
    bands = [load_c3(path) for path in data]
    features = zscore_normalize(build_band_features(bands, model.feature_mode), model.normalization)
    if model.normalization is None:
        logger.warning("%s carries no normalization stats; normalizing with the scene's own", model_file)

    start = time.perf_counter()
    probs = predict_scene(network, features.features)
    elapsed = time.perf_counter() - start
    click.echo(f"pred_time_s={elapsed:.6f}")

    predicted = class_map(probs) + 1
    write_pgm(output_file, predicted)
    if ppm_file:
        write_ppm(ppm_file, colorize(predicted, load_palette(palette_file)))
    if scores_file:
        save_scores(scores_file, probs)
    utils.print_green(f"{network.kind} class map written to {output_file}")


def select_network(network: Network, net_kind: str | None) -> Network:
    """The model's network, or the dilated network transferred from a cs model"""
    if net_kind is None or net_kind == network.kind:
        return network
    if network.kind == "cs" and net_kind == "dilated":
        return transfer_to_dilated(network)
    raise IncompatibleDataError(f"A {network.kind} model cannot run as {net_kind}")


def save_scores(path: str | Path, probs: FloatArray) -> None:
    with open(path, "wb") as file_obj:
        np.save(file_obj, probs)
    logger.info("Wrote %s scores to %s", probs.shape, path)
