"""End-to-end command line runs on tiny phantom sets."""
import json
import os

import numpy as np
import pytest
from PIL import Image

from tests.conftest import error_of, small_config_file


def _read_json(path):
    with open(path, encoding='utf-8') as fh:
        return json.load(fh)


def _sha(result):
    return result.stdout.strip().rsplit('sha256=', 1)[1]


def _train(invoke, tmp_path, data, *extra, name='run'):
    out = tmp_path / name
    config = small_config_file(tmp_path / f'{name}.json')
    result = invoke('train', '--data', data, '--out', out, '--config', config, *extra)
    assert result.exit_code == 0, result.stderr
    return out, json.loads(result.stdout.strip().splitlines()[-1])


def _components(summary):
    return {key.split(':', 1)[1] for key in summary['losses']} - {'total'}


# --- phantom ----------------------------------------------------------------

def test_phantom_is_reproducible(invoke, tmp_path):
    first = invoke('phantom', '--out', tmp_path / 'a', '--n', 4, '--size', 32, '--seed', 7)
    second = invoke('phantom', '--out', tmp_path / 'b', '--n', 4, '--size', 32, '--seed', 7)
    assert first.exit_code == 0 and second.exit_code == 0
    assert _sha(first) == _sha(second)
    assert len(os.listdir(tmp_path / 'a' / 'images')) == 4
    manifest = _read_json(tmp_path / 'a' / 'manifest.json')
    assert manifest['kind'] == 'phantom'
    assert manifest['dataset']['sha256'] == _sha(first)


def test_phantom_zero_contrast_keeps_masks(invoke, tmp_path):
    out = tmp_path / 'flat'
    result = invoke('phantom', '--out', out, '--n', 3, '--size', 32, '--contrast', 0.0)
    assert result.exit_code == 0
    for name in os.listdir(out / 'masks'):
        assert np.asarray(Image.open(out / 'masks' / name)).any()


def test_phantom_rejects_indivisible_size(invoke, tmp_path):
    result = invoke('phantom', '--out', tmp_path / 'bad', '--size', 100)
    assert result.exit_code != 0
    error = error_of(result)
    assert error['error'] == 'validation_error'
    assert 'divisible by 16' in error['message']


# --- train ------------------------------------------------------------------

@pytest.mark.parametrize('variant,expected', [
    ('basic', {'s1', 's2', 'R'}),
    ('full', {'wce', 's2', 'R+'}),
])
def test_train_logs_variant_components(invoke, make_dataset, tmp_path, variant, expected):
    out, summary = _train(invoke, tmp_path, make_dataset(), '--variant', variant)
    assert _components(summary) == expected
    assert 0.0 <= summary['dice'] <= 1.0
    for name in ('generator.bin', 'segmentor.bin', 'metrics.json', 'dice.csv', 'log.jsonl'):
        assert os.path.exists(out / name)
    manifest = _read_json(out / 'manifest.json')
    assert manifest['config']['variant'] == variant
    assert manifest['finished_at']


def test_train_fraction_is_recorded(invoke, make_dataset, tmp_path):
    out, _ = _train(invoke, tmp_path, make_dataset(n_slices=10), '--fraction', 0.4)
    extra = _read_json(out / 'manifest.json')['extra']
    assert extra['fraction'] == 0.4
    assert extra['train_size'] == 4
    assert len(extra['train_ids']) == 4


def test_train_lists_every_config_error(invoke, make_dataset, tmp_path):
    config = tmp_path / 'bad.json'
    config.write_text(json.dumps({'lambda': -1, 'batch_size': 0, 'variant': 'nope'}))
    result = invoke('train', '--data', make_dataset(), '--out', tmp_path / 'run',
                    '--config', config)
    assert result.exit_code == 1
    error = error_of(result)
    assert error['error'] == 'validation_error'
    assert set(error['details']) == {'lambda', 'batch_size', 'variant'}


def test_train_default_out_goes_under_runs_dir(invoke, make_dataset, tmp_path):
    config = small_config_file(tmp_path / 'cfg.json')
    result = invoke('train', '--data', make_dataset(), '--config', config)
    assert result.exit_code == 0, result.stderr
    run_id = json.loads(result.stdout.strip().splitlines()[-1])['run_id']
    assert os.path.exists(tmp_path / 'runs' / run_id / 'generator.bin')


# --- synth ------------------------------------------------------------------

def test_synth_writes_images_and_panels(invoke, make_dataset, tmp_path):
    data = make_dataset()
    run, _ = _train(invoke, tmp_path, data)
    out = tmp_path / 'synth'
    result = invoke('synth', '--ckpt', run / 'generator.bin', '--data', data, '--out', out)
    assert result.exit_code == 0, result.stderr

    manifest = _read_json(out / 'manifest.json')
    assert manifest['extra']['images'] == 8
    assert manifest['extra']['intensity_scale'] == 'dtype'
    for sub in ('images', 'masks', 'difference', 'panels'):
        assert len(os.listdir(out / sub)) == 8
    name = sorted(os.listdir(out / 'panels'))[0]
    assert Image.open(out / 'panels' / name).size == (4 * 32 + 6, 32)
    image = np.asarray(Image.open(out / 'images' / name))
    assert image.shape == (32, 32)


def test_synth_refuses_segmentor_checkpoint(invoke, make_dataset, tmp_path):
    data = make_dataset()
    run, _ = _train(invoke, tmp_path, data)
    result = invoke('synth', '--ckpt', run / 'segmentor.bin', '--data', data,
                    '--out', tmp_path / 'synth')
    assert result.exit_code == 1
    assert error_of(result)['error'] == 'checkpoint_error'


# --- eval -------------------------------------------------------------------

def test_eval_of_originals_has_full_identity(invoke, make_dataset, tmp_path):
    data = make_dataset()
    out = tmp_path / 'report.json'
    result = invoke('eval', '--data', data, '--synth', data, '--metric', 'id', '--out', out)
    assert result.exit_code == 0, result.stderr
    assert 'iD 1.00 ± 0.00' in result.stdout
    report = _read_json(out)
    assert report['id_mean'] == pytest.approx(1.0, abs=1e-6)
    assert len(report['difference_stats']) == 8


def test_eval_writes_dice_series(invoke, make_dataset, tmp_path):
    data = make_dataset()
    protocol = tmp_path / 'protocol.json'
    protocol.write_text(json.dumps({'epochs': 2, 'base_width': 4, 'batch_size': 4}))
    out = tmp_path / 'report.json'
    result = invoke('eval', '--data', data, '--synth', data, '--metric', 'sdice',
                    '--protocol', protocol, '--out', out)
    assert result.exit_code == 0, result.stderr
    assert (tmp_path / 'report.csv').read_text().splitlines()[0] == 'epoch,dice'
    report = _read_json(out)
    assert report['s_dice'] == pytest.approx(sum(report['dice_series']['values']))


def test_eval_names_missing_mask(invoke, make_dataset, tmp_path):
    data = make_dataset()
    os.remove(os.path.join(data, 'masks', 'phantom-00002.png'))
    result = invoke('eval', '--data', data, '--synth', data, '--out', tmp_path / 'r.json')
    assert result.exit_code == 1
    error = error_of(result)
    assert error['error'] == 'data_error'
    assert error['id'] == 'phantom-00002'


# --- ablate -----------------------------------------------------------------

def test_ablate_smoke(invoke, make_dataset, tmp_path):
    protocol = tmp_path / 'protocol.json'
    protocol.write_text(json.dumps({'epochs': 1, 'base_width': 4, 'batch_size': 4}))
    out = tmp_path / 'ablation'
    result = invoke('ablate', '--data', make_dataset(), '--out', out, '--seeds', 1,
                    '--epochs', 1, '--config', small_config_file(tmp_path / 'cfg.json'),
                    '--protocol', protocol)
    assert result.exit_code == 0, result.stderr

    table = _read_json(out / 'table.json')
    assert table['order'] == ['GVS', 'w/o L_R+', 'w/o L_wce', 'Baseline']
    assert table['complete']
    baseline = table['columns']['Baseline']['id']
    assert baseline['mean'] == pytest.approx(1.0, abs=1e-6)
    assert baseline['std'] == pytest.approx(0.0, abs=1e-6)
    assert '1.00 ± 0.00' in (out / 'table.txt').read_text()
    assert len(table['cells']) == 4


def test_ablate_rejects_unknown_variant(invoke, make_dataset, tmp_path):
    result = invoke('ablate', '--data', make_dataset(), '--out', tmp_path / 'x',
                    '--variants', 'full,bogus')
    assert result.exit_code == 2
    assert 'bogus' in result.stderr
