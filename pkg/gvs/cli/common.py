"""Helpers shared by the commands: config files, output dirs, number lists."""
import json
import os

import click

from ..exceptions import DataError, ValidationError
from ..schemas import TRAINING_PRESETS, protocol_schema, training_config_schema


def read_json_file(path) -> dict:
    if path is None:
        return {}
    try:
        with open(path, encoding='utf-8') as fh:
            payload = json.load(fh)
    except OSError as exc:
        raise DataError(f'cannot read {path}: {exc.strerror}', path=path) from exc
    except json.JSONDecodeError as exc:
        raise ValidationError(f'{path} is not valid JSON: {exc.msg}', path=path,
                              line=exc.lineno) from exc
    if not isinstance(payload, dict):
        raise ValidationError(f'{path} must hold a JSON object', path=path)
    return payload


def load_training_config(path=None, preset=None, **overrides):
    """Preset, then file, then flags; every field validated in one pass."""
    payload = dict(TRAINING_PRESETS.get(preset, {}))
    payload.update(read_json_file(path))
    payload.update({key: value for key, value in overrides.items() if value is not None})
    return training_config_schema.load(payload)


def load_protocol(path=None, **overrides):
    payload = read_json_file(path)
    payload.update({key: value for key, value in overrides.items() if value is not None})
    return protocol_schema.load(payload)


def ensure_out_dir(path) -> str:
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as exc:
        raise DataError(f'cannot create output directory {path}: {exc.strerror}',
                        path=path) from exc
    if not os.access(path, os.W_OK):
        raise DataError(f'output directory {path} is not writable', path=path)
    return path


def parse_fractions(ctx, param, value):
    """click callback: ``"0.1,0.4,1"`` -> (0.1, 0.4, 1.0)."""
    if not value:
        return ()
    try:
        fractions = tuple(float(item) for item in value.split(',') if item.strip())
    except ValueError:
        raise click.BadParameter('expected comma-separated numbers') from None
    bad = [f for f in fractions if not 0 < f <= 1]
    if bad:
        raise click.BadParameter(f'fractions must lie in (0, 1], got {bad}')
    return fractions
