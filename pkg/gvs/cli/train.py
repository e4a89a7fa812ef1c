import json
import logging
import os

import click

from ..helper import format_duration
from ..models import Variant
from ..networks import GENERATOR, SEGMENTOR, export_params
from ..observability import Stopwatch, run_context
from ..schemas import TRAINING_PRESETS, metrics_report_schema
from ..services import training
from ..services.datasets import dataset_fingerprint, load_slice_pairs, select_fraction
from ..services.metrics import write_dice_csv
from ..services.runs import finish_run, new_run_id, start_run, write_json, write_manifest
from .common import ensure_out_dir, load_training_config

logger = logging.getLogger(__name__)


@click.command('train')
@click.option('--data', required=True, type=click.Path(exists=True, file_okay=False),
              help='Dataset directory (images/ and masks/).')
@click.option('--out', type=click.Path(file_okay=False),
              help='Run directory. Defaults to a new directory under GVS_RUNS_DIR.')
@click.option('--config', 'config_file', type=click.Path(exists=True, dir_okay=False),
              help='JSON run config; omitted fields take the published defaults.')
@click.option('--preset', type=click.Choice(sorted(TRAINING_PRESETS)),
              help='Dataset profile: brats (batch 8) or lits (batch 4).')
@click.option('--variant', type=click.Choice(Variant.ALL),
              help='full: wce + R+, basic: s1 + R, no_wce: s1 + R+, no_rplus: wce + R.')
@click.option('--fraction', default=1.0, show_default=True, type=float,
              help='Seeded share of the training slices to use, in (0, 1].')
@click.option('--seed', type=int, help='Overrides the config seed.')
@click.option('--epochs', 'total_epochs', type=int, help='Overrides total_epochs (default 20).')
@click.option('--resume', type=click.Path(exists=True, dir_okay=False),
              help='Training checkpoint (ckpt-<epoch>.bin) to continue from.')
@click.pass_obj
def train(runtime, data, out, config_file, preset, variant, fraction, seed, total_epochs,
          resume):
    """Train a generator and its segmentor adversary."""
    state = None
    if resume:
        state = training.load_checkpoint(resume, device=runtime.device)
        config = state.config
        if config_file or preset or variant or seed is not None or total_epochs:
            logger.warning('config flags are ignored when resuming',
                           extra={'checkpoint': resume})
    else:
        config = load_training_config(config_file, preset, variant=variant, seed=seed,
                                      total_epochs=total_epochs)

    pairs = load_slice_pairs(data)
    train_pairs = select_fraction(pairs, fraction, config.seed)
    config_dict = config.to_dict()
    run_id = new_run_id('train', config_dict)
    out = ensure_out_dir(out or os.path.join(runtime.settings.runs_dir(), run_id))

    manifest = start_run(
        'train', config_dict, dataset_fingerprint(data), run_id=run_id,
        fraction=fraction, train_size=len(train_pairs),
        train_ids=[pair.id for pair in train_pairs], resumed_from=resume,
    )
    write_manifest(manifest, out)

    watch = Stopwatch()
    with run_context(run_id):
        state, report = training.train(config, train_pairs, run_dir=out, state=state,
                                       device=runtime.device)
    export_params(state.generator, os.path.join(out, f'{GENERATOR}.bin'), config.seed,
                  config_hash=manifest.config_hash, epoch=state.epoch)
    export_params(state.segmentor, os.path.join(out, f'{SEGMENTOR}.bin'), config.seed + 1,
                  config_hash=manifest.config_hash, epoch=state.epoch)
    write_json(metrics_report_schema.dump(report), os.path.join(out, 'metrics.json'))
    write_dice_csv(report.dice_series, os.path.join(out, 'dice.csv'))
    finish_run(manifest, out, epochs=state.epoch, steps=state.step,
               duration_ms=watch.elapsed_ms)

    last = state.history[-1] if state.history else {}
    click.echo(f'train: {config.variant} on {len(train_pairs)} slices, {state.epoch} epochs '
               f'in {format_duration(watch.elapsed_ms)} -> {out}')
    click.echo(json.dumps({'run_id': run_id, 'dice': last.get('dice'),
                           'losses': last.get('losses')}, sort_keys=True))
