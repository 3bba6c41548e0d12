"""
Time patchwise, dilated and CRPM-Net classification of the same scene.
"""

from __future__ import annotations

import json
import logging
import os
import statistics
import time
from contextlib import contextmanager
from typing import Any, Iterator

import click

from crpmnet import set_log_level
from crpmnet.engine.ctensor import CTensor
from crpmnet.engine.nets import Network, build_crpm, predict_scene, transfer_to_dilated
from crpmnet.output.model_file import ModelFile
from crpmnet.polsar.features import build_band_features, zscore_normalize
from crpmnet.polsar.scene import load_c3
from crpmnet.shared import utils
from crpmnet.shared.constants import THREADS_ENV_VAR
from crpmnet.shared.exceptions import IncompatibleDataError

logger = logging.getLogger(__name__)

MIN_BENCHMARK_EXTENT = 256


@click.command(short_help="Compare patchwise and dense classification time")
@click.option("-m", "--model", "model_file", type=click.Path(exists=True, dir_okay=False), required=True, help="cs model file.")
@click.option(
    "--crpm-model",
    "crpm_model_file",
    type=click.Path(exists=True, dir_okay=False),
    required=False,
    help="crpm model file. Without it an untrained CRPM-Net is built on the cs model.",
)
@click.option(
    "-d",
    "--data",
    type=click.Path(exists=True, dir_okay=False),
    multiple=True,
    required=True,
    help="C3 scene. Repeat for co-registered bands.",
)
@click.option("-o", "--out", "output_file", type=click.Path(dir_okay=False), required=False, help="Write the timing JSON here.")
@click.option("--repeats", type=click.IntRange(min=1), default=3, show_default=True, help="Runs per network; the median counts.")
@click.option("--seed", type=int, default=1, show_default=True, help="Seed of the untrained CRPM-Net.")
@click.option("-v", "--verbose", "verbosity", help="Log verbosity level.", count=True)
@utils.exit_on_error
def benchmark(
    model_file: str,
    crpm_model_file: str | None,
    data: tuple[str, ...],
    output_file: str | None,
    repeats: int,
    seed: int,
    verbosity: int,
) -> None:
    """
    Classify the scene with the patch classifier row by row, with its dilated counterpart and with CRPM-Net, REPEATS
    times each, and report the median wall times and the speedups over the patchwise path as JSON.
    """
    set_log_level(verbosity)
    model = ModelFile.load(model_file)
    if model.network.kind != "cs":
        raise IncompatibleDataError(f"--model must hold a cs network, {model_file} holds {model.network.kind}")
    crpm = ModelFile.load(crpm_model_file).network if crpm_model_file else build_crpm(model.network, seed=seed)
    if crpm.kind != "crpm":
        raise IncompatibleDataError(f"--crpm-model must hold a crpm network, got {crpm.kind}")

    bands = [load_c3(path) for path in data]
    scene = bands[0]
    if min(scene.height, scene.width) < MIN_BENCHMARK_EXTENT:
        logger.warning(
            "Scene is %dx%d; timings below %d pixels a side are dominated by overheads",
            scene.height,
            scene.width,
            MIN_BENCHMARK_EXTENT,
        )
    features = zscore_normalize(build_band_features(bands, model.feature_mode), model.normalization).features

    timings = run_benchmark(model.network, crpm, features, repeats)

    click.echo(json.dumps(timings, indent=4))
    if output_file:
        utils.write_json_to_file(output_file, timings)
        utils.print_green(f"Timings written to {output_file}")


@contextmanager
def single_worker() -> Iterator[None]:
    """Pin tile-level parallelism to one worker thread"""
    previous = os.environ.get(THREADS_ENV_VAR)
    os.environ[THREADS_ENV_VAR] = "1"
    try:
        yield
    finally:
        if previous is None:
            del os.environ[THREADS_ENV_VAR]
        else:
            os.environ[THREADS_ENV_VAR] = previous


def median_time(network: Network, features: CTensor, repeats: int) -> float:
    """Median wall time of ``repeats`` whole-scene predictions"""
    times = []
    for _ in range(repeats):
        start = time.perf_counter()
        predict_scene(network, features)
        times.append(time.perf_counter() - start)
    logger.info("%s: %s", network.kind, ", ".join(f"{t:.3f}s" for t in times))
    return statistics.median(times)


def run_benchmark(cs: Network, crpm: Network, features: CTensor, repeats: int = 3) -> dict[str, Any]:
    """
    Use this method as a library to time the three inference paths on one normalized feature scene. The patchwise
    path runs on one thread; the dense paths are timed with the configured worker count and again on one worker.
    """
    dilated = transfer_to_dilated(cs)
    threads = utils.get_thread_count()
    patchwise_s = median_time(cs, features, repeats)
    dilated_s = median_time(dilated, features, repeats)
    crpm_s = median_time(crpm, features, repeats)
    if threads == 1:
        dilated_single_s, crpm_single_s = dilated_s, crpm_s
    else:
        with single_worker():
            dilated_single_s = median_time(dilated, features, repeats)
            crpm_single_s = median_time(crpm, features, repeats)
    return {
        "patchwise_s": patchwise_s,
        "dilated_s": dilated_s,
        "crpm_s": crpm_s,
        "speedup_dilated": patchwise_s / dilated_s,
        "speedup_crpm": patchwise_s / crpm_s,
        "threads": threads,
        "dilated_single_thread_s": dilated_single_s,
        "crpm_single_thread_s": crpm_single_s,
        "speedup_dilated_single_thread": patchwise_s / dilated_single_s,
        "height": features.height,
        "width": features.width,
    }
