from marshmallow import Schema, fields, validate

from application.schemas import ModelConfigSchema


class GradcheckRequestSchema(Schema):
    batch = fields.Int(load_default=2, validate=validate.Range(min=1))
    tolerance = fields.Float(load_default=1e-5, validate=validate.Range(min=0.0, min_inclusive=False))
    step = fields.Float(load_default=1e-6, validate=validate.Range(min=0.0, min_inclusive=False))
    seed = fields.Int(load_default=0, validate=validate.Range(min=0))


class GradcheckReportSchema(Schema):
    model = fields.Nested(ModelConfigSchema, required=True)
    request = fields.Nested(GradcheckRequestSchema, required=True)
    errors = fields.Dict(keys=fields.Str(), values=fields.Float(), required=True)
    tolerance = fields.Float(required=True)
    passed = fields.Bool(required=True)


# Initialize schema instances
gradcheck_request_schema = GradcheckRequestSchema()
gradcheck_report_schema = GradcheckReportSchema()
