from marshmallow import Schema, fields, validate, post_load


class SynthRequestSchema(Schema):
    classes = fields.Int(required=True, validate=validate.Range(min=2, max=0xFFFF))
    size = fields.Str(required=True, validate=validate.Regexp(r"^[1-9]\d*x[1-9]\d*$", error="Size must look like MxN"))
    bands = fields.Int(required=True, validate=validate.Range(min=1))
    seed = fields.Int(load_default=0, validate=validate.Range(min=0))
    # inf gives noise-free pixels
    separation = fields.Float(load_default=10.0, allow_nan=True, validate=validate.Range(min=0.0, min_inclusive=False))
    blobs = fields.Int(load_default=1, validate=validate.Range(min=1))
    spatial_correlation = fields.Float(load_default=0.5, validate=validate.Range(min=0.0, max=1.0))
    distinct_from = fields.Float(load_default=0.0, validate=validate.Range(min=0.0, max=1.0, max_inclusive=False))
    dtype = fields.Str(load_default="f32", validate=validate.OneOf(["f32", "f64"]))
    out = fields.Str(required=True)
    labels = fields.Str(load_default=None, allow_none=True)

    @post_load
    def split_size(self, data, **kwargs):
        """Turn 'MxN' into rows m and columns n"""
        m, n = data.pop("size").split("x")
        data["m"], data["n"] = int(m), int(n)
        return data


# Initialize schema instances
synth_request_schema = SynthRequestSchema()
