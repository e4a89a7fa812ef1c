"""Observability: structured logging, run ids, and the per-step training log.

- Logs are emitted as single-line JSON so training runs and ablation workers can
  be shipped to and queried by a log aggregator.
- Every record carries the id of the run it belongs to (``run_context``), so
  interleaved output of parallel ablation cells stays attributable.
- ``StepLog`` appends one JSON record per optimization step to
  ``runs/<id>/log.jsonl``; that file is an artifact, not a log stream.
"""
import contextvars
import json
import logging
import os
import time
from contextlib import contextmanager

from pythonjsonlogger import jsonlogger

_run_id = contextvars.ContextVar('gvs_run_id', default='-')


class RunIdFilter(logging.Filter):
    """Inject the current run id into every log record."""

    def filter(self, record):
        record.run_id = _run_id.get()
        return True


@contextmanager
def run_context(run_id):
    token = _run_id.set(run_id)
    try:
        yield run_id
    finally:
        _run_id.reset(token)


def current_run_id():
    return _run_id.get()


def init_observability(settings):
    """Install the JSON handler on the root logger."""
    handler = logging.StreamHandler()
    formatter = jsonlogger.JsonFormatter(
        '%(asctime)s %(levelname)s %(name)s %(message)s %(run_id)s',
        rename_fields={'asctime': 'timestamp', 'levelname': 'level'},
    )
    handler.setFormatter(formatter)
    handler.addFilter(RunIdFilter())

    level = logging.getLevelName(str(settings.LOG_LEVEL).upper())
    if not isinstance(level, int):
        level = logging.INFO
    # Replace default handlers so we don't double-log.
    root = logging.getLogger()
    root.handlers = [handler]
    root.setLevel(level)


class StepLog:
    """Append-only JSONL writer for step and epoch records."""

    def __init__(self, path):
        self.path = path
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        self._fh = open(path, 'a', encoding='utf-8')

    def write(self, record: dict):
        self._fh.write(json.dumps(record, sort_keys=True) + '\n')
        self._fh.flush()

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class Stopwatch:
    def __init__(self):
        self.start = time.perf_counter()

    @property
    def elapsed_ms(self) -> float:
        return round((time.perf_counter() - self.start) * 1000, 2)
