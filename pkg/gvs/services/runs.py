"""Run bookkeeping: ids, tool version and the one ``manifest.json`` per artifact dir.

Timestamps live only in manifests, so every other artifact of a rerun with the
same inputs and seeds is byte-identical.
"""
from __future__ import annotations

import json
import logging
import os
import subprocess
from dataclasses import replace

from marshmallow import ValidationError as SchemaValidationError

from ..exceptions import DataError
from ..helper import config_hash, utc_timestamp
from ..models import RunManifest
from ..schemas import run_manifest_schema

logger = logging.getLogger(__name__)

MANIFEST_NAME = 'manifest.json'


def tool_version() -> str:
    """``git describe`` of the source tree, or the package version outside git."""
    from .. import __version__

    try:
        result = subprocess.run(
            ['git', 'describe', '--tags', '--always', '--dirty'],
            cwd=os.path.dirname(os.path.abspath(__file__)),
            capture_output=True, text=True, timeout=5, check=True,
        )
        described = result.stdout.strip()
        if described:
            return described
    except (OSError, subprocess.SubprocessError):
        pass
    return f'v{__version__}'


def new_run_id(kind: str, payload: dict) -> str:
    stamp = utc_timestamp().replace(':', '').replace('-', '').split('.')[0]
    return f'{kind}-{stamp}-{config_hash(payload)[:8]}'


def start_run(kind, config: dict, dataset: dict | None = None, run_id=None,
              **extra) -> RunManifest:
    return RunManifest(
        run_id=run_id or new_run_id(kind, config),
        kind=kind,
        config=config,
        config_hash=config_hash(config),
        dataset=dataset or {},
        tool_version=tool_version(),
        created_at=utc_timestamp(),
        extra=extra,
    )


def write_manifest(manifest: RunManifest, directory) -> str:
    os.makedirs(directory, exist_ok=True)
    path = os.path.join(directory, MANIFEST_NAME)
    with open(path, 'w', encoding='utf-8') as fh:
        json.dump(run_manifest_schema.dump(manifest), fh, indent=2, sort_keys=True)
    return path


def finish_run(manifest: RunManifest, directory, **extra) -> RunManifest:
    finished = replace(manifest, finished_at=utc_timestamp(),
                       extra={**manifest.extra, **extra})
    write_manifest(finished, directory)
    logger.info('run finished', extra={'run': finished.run_id, 'dir': directory})
    return finished


def read_manifest(directory) -> RunManifest | None:
    """The manifest of ``directory``, or None when it has none."""
    path = os.path.join(directory, MANIFEST_NAME)
    if not os.path.exists(path):
        return None
    with open(path, encoding='utf-8') as fh:
        raw = json.load(fh)
    try:
        return run_manifest_schema.load(raw)
    except SchemaValidationError as err:
        raise DataError(f'invalid run manifest {path}', details=err.messages) from err


def write_json(payload, path):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, 'w', encoding='utf-8') as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
    return path
