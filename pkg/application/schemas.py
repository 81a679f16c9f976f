"""
Marshmallow schemas shared by the commands: the flat run configuration,
its model/training/split components, and the JSON reports.

Run configuration precedence: config-class defaults < --config file < flags.
"""
import json
from dataclasses import dataclass, fields as dataclass_fields
from pathlib import Path
from typing import Any, Dict, Optional, Union

from marshmallow import RAISE, Schema, ValidationError, fields, post_load, validate, validates_schema

from application.hsi_data import SplitSpec
from application.models import ModelConfig
from application.training import TrainConfig

PATCH_SIZES = [8, 16, 32, 64]


class ModelConfigSchema(Schema):
    patch_size = fields.Int(required=True, validate=validate.Range(min=8))
    bands = fields.Int(required=True, validate=validate.Range(min=1))
    classes = fields.Int(required=True, validate=validate.Range(min=2))
    hidden_channels = fields.Int(load_default=32, validate=validate.Range(min=1))
    kernel_size = fields.Int(load_default=3, validate=validate.Range(min=1))
    dropout = fields.Float(load_default=0.6, validate=validate.Range(min=0.0, max=1.0, max_inclusive=False))
    band_group = fields.Int(load_default=1, validate=validate.Range(min=1))
    feature_mode = fields.Str(load_default="full_sequence", validate=validate.OneOf(["full_sequence", "last_state"]))
    direction = fields.Str(load_default="bidirectional", validate=validate.OneOf(["bidirectional", "forward"]))

    class Meta:
        unknown = RAISE


class RunConfigSchema(Schema):
    """Flat merged view of model, training and split settings plus file paths"""
    # model
    patch_size = fields.Int(required=True, validate=validate.OneOf(PATCH_SIZES))
    hidden_channels = fields.Int(required=True, validate=validate.Range(min=1))
    kernel_size = fields.Int(required=True, validate=validate.Range(min=1))
    dropout = fields.Float(required=True, validate=validate.Range(min=0.0, max=1.0, max_inclusive=False))
    band_group = fields.Int(required=True, validate=validate.Range(min=1))
    feature_mode = fields.Str(required=True, validate=validate.OneOf(["full_sequence", "last_state"]))
    direction = fields.Str(required=True, validate=validate.OneOf(["bidirectional", "forward"]))

    # training
    learning_rate = fields.Float(required=True, validate=validate.Range(min=0.0))
    batch_size = fields.Int(required=True, validate=validate.Range(min=1))
    epochs = fields.Int(required=True, validate=validate.Range(min=0))
    optimizer = fields.Str(required=True, validate=validate.OneOf(["adam", "sgd_momentum"]))
    momentum = fields.Float(required=True, validate=validate.Range(min=0.0, max=1.0, max_inclusive=False))
    beta1 = fields.Float(required=True, validate=validate.Range(min=0.0, max=1.0, max_inclusive=False))
    beta2 = fields.Float(required=True, validate=validate.Range(min=0.0, max=1.0, max_inclusive=False))
    epsilon = fields.Float(required=True, validate=validate.Range(min=0.0, min_inclusive=False))
    clip_norm = fields.Float(required=True, validate=validate.Range(min=0.0, min_inclusive=False))
    augment = fields.Bool(required=True)
    seed = fields.Int(required=True, validate=validate.Range(min=0))
    forget_bias = fields.Float(required=True)

    # split
    train_fraction = fields.Float(required=True, validate=validate.Range(min=0.0, max=1.0, min_inclusive=False,
                                                                         max_inclusive=False))
    train_counts = fields.Dict(keys=fields.Str(), values=fields.Int(validate=validate.Range(min=1)),
                               load_default=None, allow_none=True)

    threads = fields.Int(required=True, validate=validate.Range(min=1))

    # files
    cube = fields.Str(load_default=None, allow_none=True)
    labels = fields.Str(load_default=None, allow_none=True)
    checkpoint = fields.Str(load_default=None, allow_none=True)
    report = fields.Str(load_default=None, allow_none=True)
    out = fields.Str(load_default=None, allow_none=True)

    class Meta:
        unknown = RAISE

    @validates_schema
    def validate_counts(self, data, **kwargs):
        counts = data.get("train_counts")
        if counts and not all(key.isdigit() and int(key) >= 1 for key in counts):
            raise ValidationError("Class keys must be positive integers", "train_counts")

    @post_load
    def make_run_config(self, data, **kwargs):
        return RunConfig(**data)


@dataclass(frozen=True)
class RunConfig:
    patch_size: int
    hidden_channels: int
    kernel_size: int
    dropout: float
    band_group: int
    feature_mode: str
    direction: str
    learning_rate: float
    batch_size: int
    epochs: int
    optimizer: str
    momentum: float
    beta1: float
    beta2: float
    epsilon: float
    clip_norm: float
    augment: bool
    seed: int
    forget_bias: float
    train_fraction: float
    threads: int
    train_counts: Optional[Dict[str, int]] = None
    cube: Optional[str] = None
    labels: Optional[str] = None
    checkpoint: Optional[str] = None
    report: Optional[str] = None
    out: Optional[str] = None

    def to_dict(self) -> Dict[str, Any]:
        return run_config_schema.dump(self)

    def provenance(self) -> Dict[str, Any]:
        """The effective config as echoed into artefacts; the worker count does not change results"""
        echoed = self.to_dict()
        echoed.pop("threads")
        return echoed

    def model_config(self, bands: int, classes: int) -> ModelConfig:
        return ModelConfig(self.patch_size, bands, classes, self.hidden_channels, self.kernel_size, self.dropout,
                           self.band_group, self.feature_mode, self.direction)

    def train_config(self) -> TrainConfig:
        return TrainConfig(self.learning_rate, self.batch_size, self.epochs, self.optimizer, self.momentum,
                           self.beta1, self.beta2, self.epsilon, self.clip_norm, None, self.augment, self.seed,
                           self.forget_bias)

    def split_spec(self) -> SplitSpec:
        if self.train_counts:
            return SplitSpec(None, {int(k): v for k, v in self.train_counts.items()}, self.seed)
        return SplitSpec(self.train_fraction, None, self.seed)


RUN_CONFIG_KEYS = [f.name for f in dataclass_fields(RunConfig)]


def run_defaults(app_config: Union[type, dict]) -> Dict[str, Any]:
    """RunConfig keys read from the upper-case attributes of a config class"""
    lookup = app_config if isinstance(app_config, dict) else vars_of(app_config)
    return {key: lookup[key.upper()] for key in RUN_CONFIG_KEYS if key.upper() in lookup}


def vars_of(config_class: type) -> Dict[str, Any]:
    return {name: getattr(config_class, name) for name in dir(config_class) if name.isupper()}


def load_config_file(path: Union[str, Path, None]) -> Dict[str, Any]:
    if path is None:
        return {}
    try:
        document = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path} is not valid JSON: {exc}", "config") from exc
    if not isinstance(document, dict):
        raise ValidationError(f"{path} must hold a JSON object", "config")
    return document


def resolve_run_config(defaults: Dict[str, Any], config_path: Union[str, Path, None] = None,
                       overrides: Optional[Dict[str, Any]] = None) -> RunConfig:
    merged = dict(defaults)
    merged.update(load_config_file(config_path))
    merged.update({key: value for key, value in (overrides or {}).items() if value is not None})
    return run_config_schema.load(merged)


# ===== REPORTS =====

class EpochRecordSchema(Schema):
    epoch = fields.Int()
    loss = fields.Float()
    train_oa = fields.Float()


class TrainReportSchema(Schema):
    # wall-clock time is logged, not serialised
    epochs = fields.List(fields.Nested(EpochRecordSchema))
    checkpoint_path = fields.Str(allow_none=True)


class MetricsReportSchema(Schema):
    oa = fields.Float(required=True)
    aa = fields.Float(required=True)
    kappa = fields.Float(required=True)
    per_class = fields.List(fields.Float(allow_none=True), required=True)
    confusion = fields.List(fields.List(fields.Int()), required=True)
    total = fields.Int(required=True)


class RunSummarySchema(Schema):
    mean = fields.Float()
    std = fields.Float()
    runs = fields.Int()


def dump_json(payload: Dict[str, Any], path: Union[str, Path]) -> Path:
    """Sorted-key JSON so equal payloads produce equal bytes"""
    path = Path(path)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return path


# Initialize schema instances
model_config_schema = ModelConfigSchema()
run_config_schema = RunConfigSchema()
