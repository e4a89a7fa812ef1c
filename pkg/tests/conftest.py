"""Shared pytest fixtures.

Each test gets a testing runtime (cpu, eager Celery, quiet logs), small
deterministic phantom sets, and helpers for writing them in the paired-PNG
layout and driving the command line.
"""
import hashlib
import json

import pytest
from click.testing import CliRunner

from gvs import create_runtime
from gvs.cli import cli
from gvs.models import PhantomSpec, TrainingConfig
from gvs.services.datasets import generate_phantoms, write_slice_pairs


@pytest.fixture
def runtime(tmp_path, monkeypatch):
    monkeypatch.setenv('GVS_RUNS_DIR', str(tmp_path / 'runs'))
    return create_runtime('testing')


@pytest.fixture(scope='session')
def phantoms():
    """Twelve 64x64 slices with one lesion each."""
    return generate_phantoms(PhantomSpec(size=64, n_slices=12, seed=3))


@pytest.fixture
def tiny_config():
    return TrainingConfig(total_epochs=2, batch_size=4, base_width=4, seed=0)


@pytest.fixture
def make_dataset(tmp_path):
    """Factory writing phantoms (or given pairs) to a dataset directory."""
    def _make(pairs=None, name='data', **spec):
        if pairs is None:
            spec = {'size': 32, 'n_slices': 8, 'seed': 1, **spec}
            pairs = generate_phantoms(PhantomSpec(**spec))
        root = tmp_path / name
        write_slice_pairs(pairs, str(root))
        return str(root)
    return _make


@pytest.fixture
def invoke(tmp_path, monkeypatch):
    """Run ``gvs <args>`` in the testing profile; returns the click Result."""
    monkeypatch.setenv('GVS_RUNS_DIR', str(tmp_path / 'runs'))
    runner = CliRunner(mix_stderr=False)

    def _invoke(*args):
        return runner.invoke(cli, [str(a) for a in args], env={'GVS_CONFIG': 'testing'})
    return _invoke


def error_of(result):
    """The JSON error envelope a failed command wrote to stderr."""
    return json.loads(result.stderr.strip().splitlines()[-1])


def params_hash(module):
    digest = hashlib.sha256()
    for tensor in module.state_dict().values():
        digest.update(tensor.detach().cpu().contiguous().numpy().tobytes())
    return digest.hexdigest()


def small_config_file(path, **overrides):
    payload = {'total_epochs': 1, 'batch_size': 4, 'base_width': 4, **overrides}
    path.write_text(json.dumps(payload))
    return str(path)

