from marshmallow import Schema, fields

from application.schemas import MetricsReportSchema, ModelConfigSchema, TrainReportSchema


class SplitSummarySchema(Schema):
    train_pixels = fields.Int()
    test_pixels = fields.Int()
    train_samples = fields.Int()


class TrainResultSchema(Schema):
    """The JSON report written next to the checkpoint"""
    config = fields.Dict(required=True)
    model = fields.Nested(ModelConfigSchema, required=True)
    split = fields.Nested(SplitSummarySchema, required=True)
    train = fields.Nested(TrainReportSchema, required=True)
    test = fields.Nested(MetricsReportSchema, allow_none=True)


# Initialize schema instances
train_result_schema = TrainResultSchema()
