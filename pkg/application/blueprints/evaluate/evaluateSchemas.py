from marshmallow import Schema, fields, validate

from application.schemas import MetricsReportSchema

SPLITS = ["test", "train", "all"]


class EvaluationSchema(Schema):
    checkpoint = fields.Str(required=True)
    cube = fields.Str(required=True)
    split = fields.Str(required=True, validate=validate.OneOf(SPLITS))
    pixels = fields.Int(required=True)
    config = fields.Dict(allow_none=True)
    metrics = fields.Nested(MetricsReportSchema, required=True)


# Initialize schema instances
evaluation_schema = EvaluationSchema()
