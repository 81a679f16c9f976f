import logging
from pathlib import Path
from typing import List

import click
from rich.table import Table

from application.blueprints.evaluate.evaluateSchemas import SPLITS, evaluation_schema
from application.checkpoint import Checkpoint, load_checkpoint
from application.errors import ArgumentError
from application.extensions import output
from application.hsi_data import HsiCube, Pixel, apply_normalization, extract_patches, load_cube, stratified_split
from application.metrics import evaluate_samples, metrics_report
from application.schemas import dump_json, run_config_schema

logger = logging.getLogger(__name__)


def load_inputs(checkpoint_path, cube_path, labels_path):
    """Checkpoint plus the cube it refers to, normalised the way the model was trained"""
    checkpoint = load_checkpoint(checkpoint_path)
    run_config = checkpoint.run_config or {}
    cube_path = cube_path or run_config.get("cube")
    if not cube_path:
        raise ArgumentError("No cube given and the checkpoint does not name one")
    if labels_path is None and cube_path == run_config.get("cube"):
        labels_path = run_config.get("labels")
    cube = load_cube(cube_path, labels_path)
    if checkpoint.norm_stats is not None:
        cube = apply_normalization(cube, checkpoint.norm_stats)
    return checkpoint, cube, cube_path


def select_pixels(checkpoint: Checkpoint, cube: HsiCube, split: str) -> List[Pixel]:
    """Reproduce the training split from the checkpoint's run config"""
    if split == "all" or not checkpoint.run_config:
        if split != "all":
            logger.warning("Checkpoint carries no run config; evaluating every labeled pixel")
        return cube.labeled_pixels()
    run = run_config_schema.load({**checkpoint.run_config, "threads": 1})
    train_pixels, test_pixels = stratified_split(cube, run.split_spec())
    return test_pixels if split == "test" else train_pixels


@click.command("eval")
@click.option("--checkpoint", required=True, help="Checkpoint written by train.")
@click.option("--cube", help="Cube file; defaults to the one named in the checkpoint.")
@click.option("--labels", help="Label file (HSL1).")
@click.option("--split", type=click.Choice(SPLITS), default="test", show_default=True,
              help="Pixels to score: the held-out split, the training split or every labeled pixel.")
@click.option("--out", help="Metrics JSON file.")
@click.option("--threads", type=int)
@click.pass_obj
def evaluate(app_config, checkpoint, cube, labels, split, out, threads):
    """Score a checkpoint: OA, AA, per-class accuracy and kappa."""
    ckpt, data, cube_path = load_inputs(checkpoint, cube, labels)
    pixels = select_pixels(ckpt, data, split)
    if not pixels:
        raise ArgumentError(f"The {split} split is empty")
    cfg = ckpt.model.config
    samples = extract_patches(data, pixels, cfg.patch_size, cfg.band_group)
    report = metrics_report(evaluate_samples(ckpt.model, samples, cfg.classes, threads or app_config["THREADS"]))

    payload = evaluation_schema.dump({
        "checkpoint": str(checkpoint),
        "cube": str(cube_path),
        "split": split,
        "pixels": len(pixels),
        "config": ckpt.run_config,
        "metrics": report,
    })
    if out:
        dump_json(payload, Path(out))

    table = Table(title=f"{split} split, {len(pixels)} pixels")
    table.add_column("class", justify="right")
    table.add_column("accuracy", justify="right")
    for label, accuracy in enumerate(report["per_class"], start=1):
        table.add_row(str(label), "-" if accuracy is None else f"{accuracy:.4f}")
    output.print(table)
    output.print(f"OA: {report['oa']:.4f}  AA: {report['aa']:.4f}  kappa: {report['kappa']:.4f}")
