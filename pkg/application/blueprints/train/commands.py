import logging
from pathlib import Path

import click

from application.blueprints import build_run_config, common_options, model_options, train_options
from application.blueprints.train.trainSchemas import train_result_schema
from application.checkpoint import Checkpoint, save_checkpoint
from application.errors import ArgumentError
from application.extensions import output
from application.hsi_data import load_cube
from application.schemas import dump_json
from application.training import train_on_cube

logger = logging.getLogger(__name__)


@click.command("train")
@click.option("--cube", help="Cube file (HSC1).")
@click.option("--labels", help="Label file (HSL1); defaults to the cube path with .hsl.")
@click.option("--out", "checkpoint", help="Checkpoint file to write.")
@click.option("--report", help="Train report JSON; defaults to the checkpoint path with .json.")
@model_options
@train_options
@common_options
@click.pass_obj
def train(app_config, config_path, **flags):
    """Split, normalise, augment and train; write a checkpoint and a JSON report."""
    run = build_run_config(app_config, config_path, **flags)
    if not run.cube:
        raise ArgumentError("No cube given (--cube or 'cube' in the config file)")
    if not run.checkpoint:
        raise ArgumentError("No checkpoint path given (--out or 'checkpoint' in the config file)")

    cube = load_cube(run.cube, run.labels)
    model_config = run.model_config(cube.l, cube.classes)
    result = train_on_cube(cube, model_config, run.train_config(), run.split_spec(), run.threads)
    logger.info(f"Trained in {result.report.wall_clock_seconds:.1f}s",
                extra={"wall_clock_seconds": result.report.wall_clock_seconds})

    save_checkpoint(Checkpoint(result.model, result.norm_stats, result.trainer.optimizer_state, run.provenance()),
                    run.checkpoint)
    result.report.checkpoint_path = run.checkpoint
    report_path = run.report or Path(run.checkpoint).with_suffix(".json")
    payload = train_result_schema.dump({
        "config": run.provenance(),
        "model": model_config,
        "split": {
            "train_pixels": len(result.train_pixels),
            "test_pixels": len(result.test_pixels),
            "train_samples": len(result.train_pixels) * (8 if run.augment else 1),
        },
        "train": result.report,
        "test": result.test_metrics,
    })
    dump_json(payload, report_path)

    final = result.report.epochs[-1] if result.report.epochs else None
    if final:
        output.print(f"epochs: {len(result.report.epochs)}  loss: {final.loss:.6f}  training OA: {final.train_oa:.4f}")
    if result.test_metrics:
        metrics = result.test_metrics
        output.print(f"test OA: {metrics['oa']:.4f}  AA: {metrics['aa']:.4f}  kappa: {metrics['kappa']:.4f}")
    output.print(f"checkpoint: {run.checkpoint}  report: {report_path}")
