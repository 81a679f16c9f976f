import logging

import click
from rich.table import Table

from application.blueprints import build_run_config, common_options, model_options, train_options
from application.blueprints.experiment.experimentSchemas import experiment_report_schema, experiment_request_schema
from application.errors import ArgumentError
from application.extensions import output
from application.hsi_data import load_cube
from application.metrics import summarize_runs
from application.schemas import dump_json, run_config_schema
from application.training import train_on_cube

logger = logging.getLogger(__name__)


def run_setting(cube, base, repeats, vary=None, value=None):
    """Train and test once per seed base.seed .. base.seed + repeats - 1"""
    runs = []
    for r in range(repeats):
        overrides = {"seed": base.seed + r}
        if vary:
            overrides[vary] = value
        run = run_config_schema.load({**base.to_dict(), **overrides})
        result = train_on_cube(cube, run.model_config(cube.l, cube.classes), run.train_config(), run.split_spec(),
                               run.threads)
        if result.test_metrics is None:
            raise ArgumentError("The split leaves no test pixels to score")
        final = result.report.epochs[-1].loss if result.report.epochs else None
        runs.append({"seed": run.seed, "oa": result.test_metrics["oa"], "aa": result.test_metrics["aa"],
                     "kappa": result.test_metrics["kappa"], "final_loss": final})
        logger.info(f"{vary or 'run'}={value if vary else r}: seed {run.seed} test OA {runs[-1]['oa']:.4f}",
                    extra={"seed": run.seed, "oa": runs[-1]["oa"]})
    return {
        "value": getattr(run, vary) if vary else None,
        "runs": runs,
        **{metric: summarize_runs([entry[metric] for entry in runs]) for metric in ("oa", "aa", "kappa")},
    }


@click.command("experiment")
@click.option("--cube", help="Cube file (HSC1).")
@click.option("--labels", help="Label file (HSL1).")
@click.option("--repeats", type=int, help="Seeds per setting.")
@click.option("--vary", help="RunConfig key to sweep, e.g. patch_size or direction.")
@click.option("--values", help="Comma-separated values for --vary.")
@click.option("--out", help="Experiment report JSON.")
@model_options
@train_options
@common_options
@click.pass_obj
def experiment(app_config, config_path, repeats, vary, values, **flags):
    """Repeat split/train/test over seeds, optionally sweeping one key; report mean and std."""
    request = experiment_request_schema.load({
        "repeats": repeats or app_config["REPEATS"],
        "vary": vary,
        "values": [v.strip() for v in values.split(",")] if values else [],
    })
    base = build_run_config(app_config, config_path, **flags)
    if not base.cube:
        raise ArgumentError("No cube given (--cube or 'cube' in the config file)")
    cube = load_cube(base.cube, base.labels)

    settings = [
        run_setting(cube, base, request["repeats"], request["vary"], value)
        for value in (request["values"] or [None])
    ]
    report = experiment_report_schema.dump({
        "config": base.provenance(),
        "vary": request["vary"],
        "repeats": request["repeats"],
        "settings": settings,
    })
    if base.out:
        dump_json(report, base.out)

    table = Table(title=f"{request['repeats']} runs per setting")
    table.add_column(request["vary"] or "setting")
    for metric in ("OA", "AA", "kappa"):
        table.add_column(metric, justify="right")
    for setting in settings:
        cells = [f"{setting[m]['mean']:.4f} ± {setting[m]['std']:.4f}" for m in ("oa", "aa", "kappa")]
        table.add_row("base" if setting["value"] is None else str(setting["value"]), *cells)
    output.print(table)
