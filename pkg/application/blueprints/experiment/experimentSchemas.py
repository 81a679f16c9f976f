from marshmallow import Schema, fields, validate, validates_schema, ValidationError

from application.schemas import RunSummarySchema

# Keys worth sweeping; paths and execution settings are not
SWEEPABLE = [
    "patch_size", "hidden_channels", "kernel_size", "dropout", "band_group", "feature_mode", "direction",
    "learning_rate", "batch_size", "epochs", "optimizer", "momentum", "clip_norm", "augment", "forget_bias",
    "train_fraction",
]


class ExperimentRequestSchema(Schema):
    repeats = fields.Int(required=True, validate=validate.Range(min=1))
    vary = fields.Str(load_default=None, allow_none=True, validate=validate.OneOf(SWEEPABLE))
    values = fields.List(fields.Str(), load_default=[])

    @validates_schema
    def validate_sweep(self, data, **kwargs):
        if data.get("vary") and not data.get("values"):
            raise ValidationError("--vary needs --values", "values")
        if data.get("values") and not data.get("vary"):
            raise ValidationError("--values needs --vary", "vary")


class RunResultSchema(Schema):
    seed = fields.Int()
    oa = fields.Float()
    aa = fields.Float()
    kappa = fields.Float()
    final_loss = fields.Float(allow_none=True)


class SettingSummarySchema(Schema):
    value = fields.Raw(allow_none=True)
    runs = fields.List(fields.Nested(RunResultSchema))
    oa = fields.Nested(RunSummarySchema)
    aa = fields.Nested(RunSummarySchema)
    kappa = fields.Nested(RunSummarySchema)


class ExperimentReportSchema(Schema):
    config = fields.Dict(required=True)
    vary = fields.Str(allow_none=True)
    repeats = fields.Int(required=True)
    settings = fields.List(fields.Nested(SettingSummarySchema), required=True)


# Initialize schema instances
experiment_request_schema = ExperimentRequestSchema()
experiment_report_schema = ExperimentReportSchema()
