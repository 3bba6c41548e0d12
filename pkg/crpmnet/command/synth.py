"""
Synthesize a labeled multilook covariance scene drawn from the complex Wishart law.
"""

from __future__ import annotations

import logging
from pathlib import Path

import click

from crpmnet import set_log_level
from crpmnet.output.class_map import write_pgm
from crpmnet.polsar.scene import save_c3
from crpmnet.polsar.synthetic import LAYOUTS, SyntheticSceneSpec, synth_wishart_scene
from crpmnet.shared import utils

logger = logging.getLogger(__name__)


def label_path_for(scene_path: str | Path) -> Path:
    """Label PGM written next to a synthesized scene: ``scene.c3`` -> ``scene-labels.pgm``"""
    path = Path(scene_path)
    return path.with_name(f"{path.stem}-labels.pgm")


def _size(ctx: click.Context, param: click.Parameter, value: str) -> tuple[int, int]:
    try:
        return utils.parse_size(value)
    except ValueError as v_e:
        raise click.BadParameter(str(v_e), ctx=ctx, param=param) from v_e


@click.command(short_help="Synthesize a labeled Wishart covariance scene")
@click.option(
    "-o",
    "--out",
    "output_file",
    type=click.Path(dir_okay=False),
    required=True,
    help="Path of the C3 container to write. The label map is also written next to it as a PGM.",
)
@click.option("--classes", type=int, default=3, show_default=True, help="Number of classes.")
@click.option("--size", type=str, default="192x192", show_default=True, callback=_size, help="Scene size as HxW.")
@click.option("--looks", type=int, default=4, show_default=True, help="Number of looks, at least 3.")
@click.option(
    "--layout", type=click.Choice(LAYOUTS), default="checkerboard", show_default=True, help="Class layout."
)
@click.option("--seed", type=int, default=1, show_default=True, help="Random seed.")
@click.option("-v", "--verbose", "verbosity", help="Log verbosity level.", count=True)
@utils.exit_on_error
def synth(
    output_file: str, classes: int, size: tuple[int, int], looks: int, layout: str, seed: int, verbosity: int
) -> None:
    """
    Synthesize a labeled scene: every class has its own covariance matrix, every pixel averages LOOKS samples.
    Prints the pixel count of each class.
    """
    set_log_level(verbosity)
    height, width = size
    spec = SyntheticSceneSpec(classes=classes, height=height, width=width, looks=looks, layout=layout, seed=seed)
    scene = synth_wishart_scene(spec)
    save_c3(scene, output_file)
    labels_file = label_path_for(output_file)
    if scene.labels is not None:
        write_pgm(labels_file, scene.labels)
    for klass, count in scene.class_pixel_counts.items():
        click.echo(f"class={klass} pixels={count}")
    utils.print_green(f"Scene written to {output_file}, labels to {labels_file}")
