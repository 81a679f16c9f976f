from marshmallow import Schema, fields

from application.schemas import ModelConfigSchema


class MapProvenanceSchema(Schema):
    """JSON sidecar written next to every class map"""
    checkpoint = fields.Str(required=True)
    cube = fields.Str(required=True)
    map = fields.Str(required=True)
    raster = fields.Str(required=True)
    all_pixels = fields.Bool(required=True)
    predicted_pixels = fields.Int(required=True)
    class_counts = fields.Dict(keys=fields.Str(), values=fields.Int())
    model = fields.Nested(ModelConfigSchema)
    config = fields.Dict(allow_none=True)


# Initialize schema instances
map_provenance_schema = MapProvenanceSchema()
