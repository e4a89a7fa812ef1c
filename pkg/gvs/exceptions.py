"""Error hierarchy.

Every failure the toolkit reports on purpose derives from ``GVSError`` and
carries a stable ``slug`` so the CLI can emit a machine-readable envelope.
"""


class GVSError(Exception):
    slug = 'error'

    def __init__(self, message, **details):
        super().__init__(message)
        self.message = message
        self.details = details


class ValidationError(GVSError, ValueError):
    slug = 'validation_error'


class ShapeError(GVSError, ValueError):
    slug = 'shape_error'


class DataError(GVSError):
    slug = 'data_error'


class NoNormalTissueError(DataError):
    slug = 'no_normal_tissue'


class CheckpointError(GVSError):
    slug = 'checkpoint_error'


class NonFiniteLossError(GVSError, FloatingPointError):
    slug = 'non_finite_loss'

    def __init__(self, message, record=None):
        super().__init__(message, record=record)
        self.record = record


class MetricError(GVSError, ValueError):
    slug = 'metric_error'


class AblationIncompleteError(GVSError):
    slug = 'ablation_incomplete'
