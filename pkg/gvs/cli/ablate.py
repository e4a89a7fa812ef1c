import logging
import os

import click

from ..exceptions import AblationIncompleteError
from ..helper import format_duration
from ..models import Variant
from ..observability import Stopwatch
from ..schemas import TRAINING_PRESETS, protocol_schema
from ..services.ablation import build_table, cell_name, format_table
from ..services.datasets import dataset_fingerprint
from ..services.runs import finish_run, start_run, write_json, write_manifest
from ..tasks import run_ablation_cell, run_baseline_cell
from .common import ensure_out_dir, load_protocol, load_training_config, parse_fractions

logger = logging.getLogger(__name__)


def _collect(result, fallback):
    """The record a task returned, or a failure record if the task itself died."""
    try:
        return result.get()
    except Exception as exc:  # a crashed worker must not sink the whole table
        logger.exception('ablation task crashed', extra={'cell': fallback['cell']})
        return {**fallback, 'status': 'failed',
                'error': {'error': 'task_failed', 'message': str(exc)}}


@click.command('ablate')
@click.option('--data', required=True, type=click.Path(exists=True, file_okay=False))
@click.option('--out', required=True, type=click.Path(file_okay=False))
@click.option('--seeds', default=3, show_default=True, type=click.IntRange(min=1),
              help='Runs per variant; cells report mean and std over them.')
@click.option('--config', 'config_file', type=click.Path(exists=True, dir_okay=False))
@click.option('--preset', type=click.Choice(sorted(TRAINING_PRESETS)))
@click.option('--protocol', 'protocol_file', type=click.Path(exists=True, dir_okay=False))
@click.option('--epochs', 'total_epochs', type=int, help='Overrides total_epochs.')
@click.option('--variants', default=','.join(Variant.ABLATION), show_default=True,
              help='Comma-separated variants to train.')
@click.option('--fractions', callback=parse_fractions,
              help='Training-data fractions for the GVS sweep, e.g. 0.1,0.4,0.7,1.0.')
@click.option('--holdout', default=0.0, show_default=True,
              type=click.FloatRange(min=0, max=1, max_open=True),
              help='Share of slices held out for evaluation (0 evaluates on training data).')
@click.pass_obj
def ablate(runtime, data, out, seeds, config_file, preset, protocol_file, total_epochs,
           variants, fractions, holdout):
    """Train every variant for every seed and tabulate S_dice and iD."""
    config = load_training_config(config_file, preset, total_epochs=total_epochs)
    protocol = protocol_schema.dump(load_protocol(protocol_file))
    variants = tuple(v.strip() for v in variants.split(',') if v.strip())
    unknown = [v for v in variants if v not in Variant.ALL]
    if unknown:
        raise click.BadParameter(f'unknown variants {unknown}', param_hint='--variants')
    seed_list = [config.seed + offset for offset in range(seeds)]
    data = os.path.abspath(data)
    out = os.path.abspath(ensure_out_dir(out))
    config_dict = config.to_dict()

    manifest = start_run('ablate', config_dict, dataset_fingerprint(data),
                         variants=list(variants), seeds=seed_list,
                         fractions=list(fractions), holdout=holdout, protocol=protocol)
    write_manifest(manifest, out)
    watch = Stopwatch()

    jobs = []
    for seed in seed_list:
        for variant in variants:
            for fraction in sorted({1.0, *fractions}) if variant == Variant.FULL else (1.0,):
                fallback = {'cell': cell_name(variant, seed, fraction), 'variant': variant,
                            'seed': seed, 'fraction': fraction}
                jobs.append((run_ablation_cell.delay(
                    data, out, config_dict, variant, seed, fraction=fraction,
                    holdout=holdout, protocol=protocol), fallback))
    baseline_jobs = [
        (run_baseline_cell.delay(data, out, seed, holdout=holdout, protocol=protocol),
         {'cell': f'baseline-s{seed}', 'variant': 'Baseline', 'seed': seed, 'fraction': 1.0})
        for seed in seed_list
    ]
    cells = [_collect(result, fallback) for result, fallback in jobs]
    baselines = [_collect(result, fallback) for result, fallback in baseline_jobs]

    table = build_table(cells, baselines, seed_list)
    table['cells'] = cells + baselines
    text = format_table(table)
    write_json(table, os.path.join(out, 'table.json'))
    with open(os.path.join(out, 'table.txt'), 'w', encoding='utf-8') as fh:
        fh.write(text)
    finish_run(manifest, out, complete=table['complete'], duration_ms=watch.elapsed_ms)

    click.echo(text, nl=False)
    click.echo(f'ablate: {len(cells)} cells + {len(baselines)} baselines in '
               f'{format_duration(watch.elapsed_ms)} -> {out}')
    if not table['complete']:
        failed = sorted(c['cell'] for c in cells + baselines if c['status'] != 'ok')
        raise AblationIncompleteError(f'{len(failed)} ablation cells failed', cells=failed)
