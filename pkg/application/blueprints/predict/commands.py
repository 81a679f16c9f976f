from pathlib import Path

import click
import numpy as np

from application.blueprints.evaluate.commands import load_inputs
from application.blueprints.predict.predictSchemas import map_provenance_schema
from application.extensions import output
from application.hsi_data import save_labels
from application.metrics import render_map
from application.schemas import dump_json


@click.command("predict")
@click.option("--checkpoint", required=True, help="Checkpoint written by train.")
@click.option("--cube", help="Cube file; defaults to the one named in the checkpoint.")
@click.option("--labels", help="Label file (HSL1).")
@click.option("--out", required=True, help="Class map image (binary PPM).")
@click.option("--raster", help="Predicted labels as HSL1; defaults to the map path with .hsl.")
@click.option("--all-pixels", is_flag=True, help="Predict every pixel, not only labeled ones.")
@click.option("--threads", type=int)
@click.pass_obj
def predict(app_config, checkpoint, cube, labels, out, raster, all_pixels, threads):
    """Render the predicted class map with a fixed palette."""
    ckpt, data, cube_path = load_inputs(checkpoint, cube, labels)
    out = Path(out)
    raster_path = Path(raster) if raster else out.with_suffix(".hsl")
    predicted = render_map(data, ckpt.model, out, all_pixels, threads or app_config["THREADS"])
    save_labels(predicted, raster_path)

    counts = np.bincount(predicted.reshape(-1), minlength=ckpt.model.config.classes + 1)
    sidecar = map_provenance_schema.dump({
        "checkpoint": str(checkpoint),
        "cube": str(cube_path),
        "map": str(out),
        "raster": str(raster_path),
        "all_pixels": all_pixels,
        "predicted_pixels": int(counts[1:].sum()),
        "class_counts": {str(k): int(counts[k]) for k in range(1, len(counts))},
        "model": ckpt.model.config,
        "config": ckpt.run_config,
    })
    dump_json(sidecar, out.with_suffix(".json"))
    output.print(f"map: {out}  raster: {raster_path}  pixels: {sidecar['predicted_pixels']}")
