import logging

import click
from rich.table import Table

from application.blueprints.synth.synthSchemas import synth_request_schema
from application.extensions import output
from application.hsi_data import labels_path_for, save_cube, synth_cube

logger = logging.getLogger(__name__)


@click.command("synth")
@click.option("--classes", type=int, required=True, help="Number of classes (at least 2).")
@click.option("--size", required=True, help="Raster size as MxN, e.g. 32x32.")
@click.option("--bands", type=int, required=True, help="Spectral bands l.")
@click.option("--seed", type=int)
@click.option("--separation", type=float, help="Signature spread over noise std; inf for noise-free.")
@click.option("--blobs", type=int, help="Rectangular regions per class.")
@click.option("--spatial-correlation", "spatial_correlation", type=float,
              help="Share of noise variance that is spatially smooth.")
@click.option("--distinct-from", "distinct_from", type=float,
              help="Fraction of leading bands where all classes share one signature.")
@click.option("--dtype", type=click.Choice(["f32", "f64"]))
@click.option("--out", required=True, help="Cube file (HSC1).")
@click.option("--labels", help="Label file (HSL1); defaults to the cube path with .hsl.")
def synth(**options):
    """Write a synthetic HSC1/HSL1 cube pair and print its class populations."""
    request = synth_request_schema.load({key: value for key, value in options.items() if value is not None})
    cube = synth_cube(request["classes"], request["m"], request["n"], request["bands"], request["seed"],
                      request["separation"], request["blobs"], request["spatial_correlation"],
                      request["distinct_from"])
    labels_path = request["labels"] or labels_path_for(request["out"])
    save_cube(cube, request["out"], labels_path, request["dtype"])
    logger.info(f"Wrote {request['out']} and {labels_path}",
                extra={"shape": cube.values.shape, "seed": request["seed"]})

    table = Table(title=f"{cube.m}x{cube.n}x{cube.l} cube, seed {request['seed']}")
    table.add_column("class", justify="right")
    table.add_column("pixels", justify="right")
    for label, count in cube.class_populations().items():
        table.add_row(str(label), str(count))
    output.print(table)
