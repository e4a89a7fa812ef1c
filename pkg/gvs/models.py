"""Domain records: slices, phantom specs, run configs, reports and manifests.

These are plain dataclasses. Validation of user-supplied values lives in
``gvs.schemas``; the records re-run that validation on construction so an
invalid config cannot be built in-process either.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .exceptions import ShapeError, ValidationError


class Variant:
    """Which losses each side of the game uses (the ablation switches)."""

    FULL = 'full'          # L_wce + L_R+
    BASIC = 'basic'        # L_s1 + L_R
    NO_WCE = 'no_wce'      # L_s1 + L_R+
    NO_RPLUS = 'no_rplus'  # L_wce + L_R

    ALL = (FULL, BASIC, NO_WCE, NO_RPLUS)
    ABLATION = (FULL, NO_RPLUS, NO_WCE)

    @staticmethod
    def uses_wce(variant: str) -> bool:
        return variant in (Variant.FULL, Variant.NO_RPLUS)

    @staticmethod
    def uses_rplus(variant: str) -> bool:
        return variant in (Variant.FULL, Variant.NO_WCE)


@dataclass
class SlicePair:
    """One grayscale slice in [0, 1] and its binary lesion mask."""

    id: str
    image: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        if self.image.ndim != 2 or self.image.shape != self.mask.shape:
            raise ShapeError(
                f'slice {self.id!r}: image {self.image.shape} and mask '
                f'{self.mask.shape} do not match',
                id=self.id,
            )

    @property
    def shape(self) -> tuple[int, int]:
        return self.image.shape

    @property
    def is_healthy(self) -> bool:
        return not bool(self.mask.any())


def _validate(schema_name, record):
    from . import schemas

    schema = getattr(schemas, schema_name)
    errors = schema.validate(schema.dump(record))
    if errors:
        raise ValidationError(f'invalid {type(record).__name__}', errors=errors)


@dataclass(frozen=True)
class PhantomSpec:
    size: int = 128
    n_slices: int = 200
    lesion_contrast: float = 0.35
    lesion_radius_range: tuple[float, float] = (0.05, 0.12)
    texture_scale: float = 1.0
    seed: int = 0

    def __post_init__(self):
        _validate('phantom_spec_schema', self)


@dataclass(frozen=True)
class TrainingConfig:
    """Hyperparameters of one GVS run. Defaults are the published settings."""

    lambda_: float = 1.0
    lambda1: float = 0.1
    total_epochs: int = 20
    batch_size: int = 8
    lr_initial: float = 0.001
    lr_decay_factor: float = 0.1
    lr_decay_at: float = 0.8
    seed: int = 0
    variant: str = Variant.FULL
    base_width: int = 16
    precision: int = 32
    include_healthy: bool = True
    literal_wce: bool = False
    body_threshold: float = 0.01
    checkpoint_every: int = 1

    def __post_init__(self):
        _validate('training_config_schema', self)

    def to_dict(self) -> dict:
        from .schemas import training_config_schema

        return training_config_schema.dump(self)


@dataclass(frozen=True)
class Protocol:
    """Fresh-segmentor training protocol behind S_dice."""

    epochs: int = 20
    seed: int = 0
    base_width: int = 16
    batch_size: int = 8
    lr_initial: float = 0.001
    lr_decay_factor: float = 0.1
    lr_decay_at: float = 0.8
    precision: int = 32

    def __post_init__(self):
        _validate('protocol_schema', self)


@dataclass
class StepRecord:
    epoch: int
    step: int
    phase: str
    components: dict[str, float]
    lr: float

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class DiceSeries:
    values: list[float]
    epochs: int
    seed: int
    base_width: int

    @property
    def total(self) -> float:
        return float(sum(self.values))


@dataclass
class MetricsReport:
    s_dice: float | None = None
    id_mean: float | None = None
    id_std: float | None = None
    dice_series: DiceSeries | None = None
    difference_stats: list[dict] = field(default_factory=list)
    variant: str | None = None
    dataset: str | None = None
    protocol: dict | None = None
    extra: dict = field(default_factory=dict)


@dataclass
class RunManifest:
    run_id: str
    kind: str
    config: dict
    config_hash: str
    dataset: dict
    tool_version: str
    created_at: str
    finished_at: str | None = None
    extra: dict = field(default_factory=dict)
