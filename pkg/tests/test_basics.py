"""Runtime bootstrap, configuration profiles, logging and error plumbing."""
import json
import logging

import pytest

from config import ProductionConfig, TestingConfig
from gvs import current_runtime
from gvs.exceptions import (
    CheckpointError,
    GVSError,
    NoNormalTissueError,
    NonFiniteLossError,
    ValidationError,
)
from gvs.helper import config_hash, format_duration
from gvs.observability import RunIdFilter, StepLog, current_run_id, run_context
from gvs.tasks import celery_app


def test_runtime_is_testing(runtime):
    assert runtime.settings is TestingConfig
    assert runtime.settings.TESTING
    assert runtime.device.type == 'cpu'
    assert current_runtime() is runtime


def test_runs_dir_reads_environment(runtime, tmp_path):
    assert runtime.settings.runs_dir() == str(tmp_path / 'runs')


def test_celery_runs_cells_eagerly_in_testing(runtime):
    assert celery_app.conf.task_always_eager is True


def test_production_requires_broker(monkeypatch):
    monkeypatch.setattr(ProductionConfig, 'CELERY_TASK_ALWAYS_EAGER', False)
    monkeypatch.delenv('CELERY_BROKER_URL', raising=False)
    monkeypatch.delenv('CELERY_RESULT_BACKEND', raising=False)
    with pytest.raises(RuntimeError, match='CELERY_BROKER_URL'):
        ProductionConfig.init_app(None)


def test_run_id_filter_tags_records():
    record = logging.LogRecord('gvs', logging.INFO, __file__, 1, 'hello', None, None)
    with run_context('run-42'):
        assert current_run_id() == 'run-42'
        RunIdFilter().filter(record)
    assert record.run_id == 'run-42'
    assert current_run_id() == '-'


def test_step_log_appends_json_lines(tmp_path):
    path = tmp_path / 'run' / 'log.jsonl'
    with StepLog(str(path)) as log:
        log.write({'phase': 'A', 'step': 0})
        log.write({'phase': 'B', 'step': 0})
    lines = [json.loads(line) for line in path.read_text().splitlines()]
    assert [line['phase'] for line in lines] == ['A', 'B']


def test_config_hash_ignores_key_order():
    assert config_hash({'a': 1, 'b': 2.5}) == config_hash({'b': 2.5, 'a': 1})
    assert config_hash({'a': 1}) != config_hash({'a': 2})
    assert len(config_hash({})) == 16


def test_format_duration():
    assert 'minute' in format_duration(90_000)


def test_error_slugs():
    assert ValidationError('x').slug == 'validation_error'
    assert isinstance(ValidationError('x'), ValueError)
    assert NoNormalTissueError('x').slug == 'no_normal_tissue'
    assert CheckpointError('x', path='p').details == {'path': 'p'}
    err = NonFiniteLossError('boom', record={'phase': 'A'})
    assert isinstance(err, GVSError)
    assert err.record == {'phase': 'A'}
