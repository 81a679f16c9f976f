"""Options shared by the commands that build a RunConfig"""
import click

from application.schemas import RunConfig, resolve_run_config, run_defaults

ON_OFF = click.Choice(["on", "off"])

MODEL_OPTIONS = [
    click.option("--patch-size", "patch_size", type=int, help="Patch side p (8, 16, 32 or 64)."),
    click.option("--hidden", "hidden_channels", type=int, help="Hidden channels per CLSTM."),
    click.option("--kernel-size", "kernel_size", type=int, help="Odd convolution kernel size."),
    click.option("--dropout", type=float, help="Dropout rate on pooled features."),
    click.option("--band-group", "band_group", type=int, help="Bands per recurrent step."),
    click.option("--feature-mode", "feature_mode", type=click.Choice(["full_sequence", "last_state"])),
    click.option("--direction", type=click.Choice(["bidirectional", "forward"])),
]

TRAIN_OPTIONS = [
    click.option("--lr", "learning_rate", type=float, help="Learning rate."),
    click.option("--batch-size", "batch_size", type=int),
    click.option("--epochs", type=int),
    click.option("--optimizer", type=click.Choice(["adam", "sgd_momentum"])),
    click.option("--momentum", type=float),
    click.option("--clip-norm", "clip_norm", type=float, help="Global gradient norm bound."),
    click.option("--augment", type=ON_OFF, help="8x rotate/flip augmentation of the training set."),
    click.option("--forget-bias", "forget_bias", type=float),
    click.option("--train-fraction", "train_fraction", type=float, help="Per-class training fraction."),
]

COMMON_OPTIONS = [
    click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
                 help="Flat JSON run config; flags override its values."),
    click.option("--seed", type=int),
    click.option("--threads", type=int, help="Worker threads; results do not depend on it."),
]


def _apply(options):
    def decorator(fn):
        for option in reversed(options):
            fn = option(fn)
        return fn
    return decorator


model_options = _apply(MODEL_OPTIONS)
train_options = _apply(TRAIN_OPTIONS)
common_options = _apply(COMMON_OPTIONS)


def build_run_config(app_config: dict, config_path=None, **flags) -> RunConfig:
    """Merge config-class defaults, the --config file and explicit flags"""
    if flags.get("augment") is not None:
        flags["augment"] = flags["augment"] == "on"
    return resolve_run_config(run_defaults(app_config), config_path, flags)
