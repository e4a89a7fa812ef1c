"""Run configs, protocols and phantom specs: defaults and exhaustive validation."""
import pytest
from marshmallow import ValidationError as SchemaValidationError

from gvs.exceptions import ValidationError
from gvs.models import PhantomSpec, Protocol, TrainingConfig, Variant
from gvs.schemas import (
    TRAINING_PRESETS,
    phantom_spec_schema,
    protocol_schema,
    training_config_schema,
)


def test_training_defaults_are_published_settings():
    config = training_config_schema.load({})
    assert config == TrainingConfig()
    assert config.lambda_ == 1.0
    assert config.lambda1 == 0.1
    assert config.total_epochs == 20
    assert config.batch_size == 8
    assert config.lr_initial == 0.001
    assert config.lr_decay_factor == 0.1
    assert config.lr_decay_at == 0.8
    assert config.variant == Variant.FULL


def test_config_dump_uses_json_keys():
    dumped = TrainingConfig(lambda_=2.0).to_dict()
    assert dumped['lambda'] == 2.0
    assert 'lambda_' not in dumped
    assert training_config_schema.load(dumped) == TrainingConfig(lambda_=2.0)


def test_config_errors_are_listed_together():
    with pytest.raises(SchemaValidationError) as info:
        training_config_schema.load(
            {'lambda': -1, 'lambda1': 1.5, 'variant': 'bogus', 'total_epochs': 0})
    assert set(info.value.messages) == {'lambda', 'lambda1', 'variant', 'total_epochs'}


def test_records_validate_on_construction():
    with pytest.raises(ValidationError):
        TrainingConfig(lambda_=0.0)
    with pytest.raises(ValidationError):
        TrainingConfig(lambda1=1.0)
    with pytest.raises(ValidationError):
        Protocol(epochs=0)


def test_presets():
    assert TRAINING_PRESETS['brats']['batch_size'] == 8
    assert TRAINING_PRESETS['lits']['batch_size'] == 4


def test_protocol_defaults():
    assert protocol_schema.load({}) == Protocol(epochs=20, seed=0, base_width=16)


def test_phantom_radius_range_checked():
    with pytest.raises(SchemaValidationError) as info:
        phantom_spec_schema.load({'lesion_radius_range': [0.2, 0.1]})
    assert 'lesion_radius_range' in info.value.messages
    spec = phantom_spec_schema.load({'size': 64, 'lesion_radius_range': [0.05, 0.1]})
    assert spec == PhantomSpec(size=64, lesion_radius_range=(0.05, 0.1))
