import click
from rich.table import Table

from application.blueprints.gradcheck.gradcheckSchemas import gradcheck_report_schema, gradcheck_request_schema
from application.extensions import output
from application.schemas import dump_json, model_config_schema
from application.models import ModelConfig
from application.training import gradcheck as run_gradcheck


@click.command("gradcheck")
@click.option("--patch-size", "patch_size", type=int, default=8, show_default=True)
@click.option("--bands", type=int, default=3, show_default=True)
@click.option("--band-group", "band_group", type=int, default=1, show_default=True)
@click.option("--hidden", "hidden_channels", type=int, default=2, show_default=True)
@click.option("--classes", type=int, default=2, show_default=True)
@click.option("--kernel-size", "kernel_size", type=int, default=3, show_default=True)
@click.option("--dropout", type=float, help="Dropout rate; defaults to the configured rate.")
@click.option("--feature-mode", "feature_mode", type=click.Choice(["full_sequence", "last_state"]))
@click.option("--direction", type=click.Choice(["bidirectional", "forward"]))
@click.option("--batch", type=int)
@click.option("--tolerance", type=float)
@click.option("--step", type=float, help="Central-difference step.")
@click.option("--seed", type=int)
@click.option("--report", help="Write the per-block errors as JSON.")
@click.pass_context
def gradcheck(ctx, batch, tolerance, step, seed, report, **model_flags):
    """Compare analytic gradients with central finite differences; exit 1 on failure."""
    request = gradcheck_request_schema.load(
        {key: value for key, value in dict(batch=batch, tolerance=tolerance, step=step, seed=seed).items()
         if value is not None})
    model_flags["dropout"] = ctx.obj["DROPOUT"] if model_flags["dropout"] is None else model_flags["dropout"]
    model_config = ModelConfig(**model_config_schema.load(
        {key: value for key, value in model_flags.items() if value is not None}))

    result = run_gradcheck(model_config, request["seed"], request["tolerance"], request["batch"], request["step"])

    table = Table(title=f"gradcheck (tolerance {result.tolerance:g})")
    table.add_column("block")
    table.add_column("max relative error", justify="right")
    for name, error in result.errors.items():
        style = None if error < result.tolerance else "bold red"
        table.add_row(name, f"{error:.3e}", style=style)
    output.print(table)
    output.print("PASS" if result.passed else "FAIL")

    if report:
        dump_json(gradcheck_report_schema.dump({
            "model": model_config,
            "request": request,
            "errors": result.errors,
            "tolerance": result.tolerance,
            "passed": result.passed,
        }), report)
    if not result.passed:
        ctx.exit(1)
