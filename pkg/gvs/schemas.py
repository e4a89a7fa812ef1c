"""Marshmallow schemas for run configs, manifests and reports.

Schemas are the single source of truth for the shape of every JSON document the
toolkit reads or writes. User input (config and protocol files, phantom flags)
is validated here, collecting every error before failing, rather than by hand
in the commands.
"""
from marshmallow import (
    EXCLUDE,
    Schema,
    ValidationError,
    fields,
    post_load,
    validate,
    validates_schema,
)

from .models import (
    DiceSeries,
    MetricsReport,
    PhantomSpec,
    Protocol,
    RunManifest,
    TrainingConfig,
    Variant,
)

_positive = validate.Range(min=0, min_inclusive=False)
_unit_open = validate.Range(min=0, max=1, min_inclusive=False, max_inclusive=False)
_unit_half_open = validate.Range(min=0, max=1, min_inclusive=False)

# Per-dataset overrides from the published setup (batch 8 on brain MR, 4 on liver CT).
TRAINING_PRESETS = {
    'brats': {'batch_size': 8},
    'lits': {'batch_size': 4},
}


class PhantomSpecSchema(Schema):
    size = fields.Int(load_default=128, validate=validate.Range(min=32))
    n_slices = fields.Int(load_default=200, validate=validate.Range(min=1))
    lesion_contrast = fields.Float(load_default=0.35, validate=validate.Range(min=0))
    lesion_radius_range = fields.Tuple(
        (fields.Float(), fields.Float()), load_default=(0.05, 0.12))
    texture_scale = fields.Float(load_default=1.0, validate=_positive)
    seed = fields.Int(load_default=0)

    @validates_schema
    def check_radius_range(self, data, **kwargs):
        low, high = data.get('lesion_radius_range', (0.05, 0.12))
        if not 0 < low <= high < 0.5:
            raise ValidationError(
                'expected 0 < min <= max < 0.5', field_name='lesion_radius_range')

    @post_load
    def make_spec(self, data, **kwargs):
        data['lesion_radius_range'] = tuple(data['lesion_radius_range'])
        return PhantomSpec(**data)


class TrainingConfigSchema(Schema):
    """A GVS run config. Every field has the published default."""

    lambda_ = fields.Float(attribute='lambda_', data_key='lambda',
                           load_default=1.0, validate=_positive)
    lambda1 = fields.Float(load_default=0.1, validate=_unit_open)
    total_epochs = fields.Int(load_default=20, validate=validate.Range(min=1))
    batch_size = fields.Int(load_default=8, validate=validate.Range(min=1))
    lr_initial = fields.Float(load_default=0.001, validate=_positive)
    lr_decay_factor = fields.Float(load_default=0.1, validate=_unit_half_open)
    lr_decay_at = fields.Float(load_default=0.8, validate=_unit_half_open)
    seed = fields.Int(load_default=0, validate=validate.Range(min=0))
    variant = fields.Str(load_default=Variant.FULL, validate=validate.OneOf(Variant.ALL))
    base_width = fields.Int(load_default=16, validate=validate.Range(min=4))
    precision = fields.Int(load_default=32, validate=validate.OneOf([32, 64]))
    include_healthy = fields.Bool(load_default=True)
    literal_wce = fields.Bool(load_default=False)
    body_threshold = fields.Float(
        load_default=0.01, validate=validate.Range(min=0, max=1, max_inclusive=False))
    checkpoint_every = fields.Int(load_default=1, validate=validate.Range(min=1))

    @post_load
    def make_config(self, data, **kwargs):
        return TrainingConfig(**data)


class ProtocolSchema(Schema):
    epochs = fields.Int(load_default=20, validate=validate.Range(min=1))
    seed = fields.Int(load_default=0, validate=validate.Range(min=0))
    base_width = fields.Int(load_default=16, validate=validate.Range(min=4))
    batch_size = fields.Int(load_default=8, validate=validate.Range(min=1))
    lr_initial = fields.Float(load_default=0.001, validate=_positive)
    lr_decay_factor = fields.Float(load_default=0.1, validate=_unit_half_open)
    lr_decay_at = fields.Float(load_default=0.8, validate=_unit_half_open)
    precision = fields.Int(load_default=32, validate=validate.OneOf([32, 64]))

    @post_load
    def make_protocol(self, data, **kwargs):
        return Protocol(**data)


class LayerSchema(Schema):
    name = fields.Str(required=True)
    shape = fields.List(fields.Int(), required=True)
    offset = fields.Int(required=True, validate=validate.Range(min=0))
    count = fields.Int(required=True, validate=validate.Range(min=0))


class CheckpointManifestSchema(Schema):
    """The JSON sidecar of a ``.bin`` parameter blob."""

    class Meta:
        unknown = EXCLUDE

    format = fields.Int(load_default=1)
    kind = fields.Str(required=True, validate=validate.OneOf(
        ['generator', 'segmentor', 'train_state']))
    dtype = fields.Str(required=True, validate=validate.OneOf(['float32', 'float64']))
    base_width = fields.Int(required=True)
    seed = fields.Int(required=True)
    total_count = fields.Int(required=True)
    blob_sha256 = fields.Str(required=True)
    layers = fields.List(fields.Nested(LayerSchema), required=True)
    config_hash = fields.Str(allow_none=True, load_default=None)
    config = fields.Dict(allow_none=True, load_default=None)
    epoch = fields.Int(load_default=0)
    step = fields.Int(load_default=0)
    lr = fields.Float(allow_none=True, load_default=None)
    history = fields.List(fields.Dict(), load_default=list)


class DiceSeriesSchema(Schema):
    class Meta:
        unknown = EXCLUDE

    values = fields.List(fields.Float())
    epochs = fields.Int()
    seed = fields.Int()
    base_width = fields.Int()
    total = fields.Float(dump_only=True)

    @post_load
    def make_series(self, data, **kwargs):
        return DiceSeries(**data)


class MetricsReportSchema(Schema):
    s_dice = fields.Float(allow_none=True)
    id_mean = fields.Float(allow_none=True)
    id_std = fields.Float(allow_none=True)
    dice_series = fields.Nested(DiceSeriesSchema, allow_none=True)
    difference_stats = fields.List(fields.Dict())
    variant = fields.Str(allow_none=True)
    dataset = fields.Str(allow_none=True)
    protocol = fields.Dict(allow_none=True)
    extra = fields.Dict()

    @post_load
    def make_report(self, data, **kwargs):
        return MetricsReport(**data)


class RunManifestSchema(Schema):
    run_id = fields.Str(required=True)
    kind = fields.Str(required=True)
    config = fields.Dict()
    config_hash = fields.Str()
    dataset = fields.Dict()
    tool_version = fields.Str()
    created_at = fields.Str()
    finished_at = fields.Str(allow_none=True)
    extra = fields.Dict()

    @post_load
    def make_manifest(self, data, **kwargs):
        return RunManifest(**data)


phantom_spec_schema = PhantomSpecSchema()
training_config_schema = TrainingConfigSchema()
protocol_schema = ProtocolSchema()
checkpoint_manifest_schema = CheckpointManifestSchema()
dice_series_schema = DiceSeriesSchema()
metrics_report_schema = MetricsReportSchema()
run_manifest_schema = RunManifestSchema()
