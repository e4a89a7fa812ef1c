"""Formatting and hashing helpers shared by services and commands."""
import hashlib
import json
from datetime import timedelta

import humanize
import pendulum


def utc_timestamp() -> str:
    return pendulum.now('UTC').to_iso8601_string()


def format_duration(milliseconds: float) -> str:
    """Return a human-friendly duration string (e.g. "3 minutes")."""
    return humanize.precisedelta(timedelta(milliseconds=milliseconds),
                                 minimum_unit='seconds', format='%0.1f')


def canonical_json(payload) -> str:
    return json.dumps(payload, sort_keys=True, separators=(',', ':'))


def config_hash(payload: dict) -> str:
    """Short stable hash of a JSON-able config."""
    return hashlib.sha256(canonical_json(payload).encode()).hexdigest()[:16]


def file_sha256(path, chunk_size=1 << 20) -> str:
    digest = hashlib.sha256()
    with open(path, 'rb') as fh:
        for chunk in iter(lambda: fh.read(chunk_size), b''):
            digest.update(chunk)
    return digest.hexdigest()
