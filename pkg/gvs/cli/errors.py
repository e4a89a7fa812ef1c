"""Consistent JSON error envelopes for the command line.

Every failure is reported on stderr as one line of the same shape::

    {"error": "<slug>", "message": "<human readable>", ...}

followed by a nonzero exit status, so scripts can branch on a stable ``error``
field.
"""
import json

import click
import numpy as np
from marshmallow import ValidationError as SchemaValidationError

from ..exceptions import GVSError

EXIT_FAILURE = 1


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, (str, int, float, bool)) or value is None:
        return value
    return str(value)


def emit_error(slug, message, **extra):
    payload = {'error': slug, 'message': message}
    payload.update(_jsonable(extra))
    click.echo(json.dumps(payload, sort_keys=True), err=True)


def unprocessable(errors):
    """Schema validation failures; ``errors`` is a field->messages map."""
    emit_error('validation_error', 'input failed validation', details=errors)


class GVSGroup(click.Group):
    """Command group that turns toolkit errors into envelopes."""

    def invoke(self, ctx):
        try:
            return super().invoke(ctx)
        except GVSError as exc:
            emit_error(exc.slug, exc.message, **exc.details)
        except SchemaValidationError as err:
            unprocessable(err.messages)
        ctx.exit(EXIT_FAILURE)
