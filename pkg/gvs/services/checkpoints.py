"""Parameter blobs: flattened little-endian float arrays plus a JSON manifest.

``<name>.bin`` holds the concatenated arrays; ``<name>.json`` records, per
array, its name, shape, offset and element count, together with the kind of
store, dtype, seed, widths and a sha256 of the blob. A blob whose bytes do not
match its manifest is refused.
"""
from __future__ import annotations

import hashlib
import json
import os

import numpy as np
from marshmallow import ValidationError as SchemaValidationError

from ..exceptions import CheckpointError
from ..schemas import checkpoint_manifest_schema

_NUMPY_DTYPES = {'float32': np.dtype('<f4'), 'float64': np.dtype('<f8')}


def manifest_path(path) -> str:
    return os.path.splitext(path)[0] + '.json'


def write_blob(path, named_arrays, *, kind, dtype, base_width, seed, **meta):
    """Write ``named_arrays`` (an iterable of (name, array)) and its manifest."""
    np_dtype = _NUMPY_DTYPES[dtype]
    layers, chunks, offset = [], [], 0
    for name, array in named_arrays:
        array = np.asarray(array)
        flat = np.ascontiguousarray(array, dtype=np_dtype).ravel()
        layers.append({'name': name, 'shape': list(array.shape),
                       'offset': offset, 'count': int(flat.size)})
        offset += int(flat.size)
        chunks.append(flat)
    blob = np.concatenate(chunks).tobytes() if chunks else b''

    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, 'wb') as fh:
        fh.write(blob)
    manifest = {
        'format': 1,
        'kind': kind,
        'dtype': dtype,
        'base_width': base_width,
        'seed': seed,
        'total_count': offset,
        'blob_sha256': hashlib.sha256(blob).hexdigest(),
        'layers': layers,
        **meta,
    }
    with open(manifest_path(path), 'w', encoding='utf-8') as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    return manifest


def read_blob(path, expected_kind=None):
    """Return (manifest, {name: array}) after checking blob against manifest."""
    sidecar = manifest_path(path)
    if not os.path.exists(path) or not os.path.exists(sidecar):
        raise CheckpointError(f'checkpoint {path} or its manifest is missing', path=path)
    with open(sidecar, encoding='utf-8') as fh:
        raw = json.load(fh)
    try:
        manifest = checkpoint_manifest_schema.load(raw)
    except SchemaValidationError as err:
        raise CheckpointError(f'invalid manifest {sidecar}', details=err.messages) from err

    if expected_kind is not None:
        allowed = (expected_kind,) if isinstance(expected_kind, str) else tuple(expected_kind)
        if manifest['kind'] not in allowed:
            raise CheckpointError(
                f"checkpoint {path} holds a {manifest['kind']} store, expected "
                + ' or '.join(allowed),
                kind=manifest['kind'],
            )

    with open(path, 'rb') as fh:
        blob = fh.read()
    np_dtype = _NUMPY_DTYPES[manifest['dtype']]
    if (len(blob) != manifest['total_count'] * np_dtype.itemsize
            or hashlib.sha256(blob).hexdigest() != manifest['blob_sha256']):
        raise CheckpointError(f'manifest/blob mismatch for {path}', path=path)

    flat = np.frombuffer(blob, dtype=np_dtype)
    arrays = {}
    for layer in manifest['layers']:
        count = layer['count']
        end = layer['offset'] + count
        if end > flat.size or count != int(np.prod(layer['shape'], dtype=np.int64)):
            raise CheckpointError(
                f"manifest/blob mismatch for layer {layer['name']}", path=path)
        arrays[layer['name']] = flat[layer['offset']:end].reshape(layer['shape']).copy()
    return manifest, arrays
