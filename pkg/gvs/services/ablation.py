"""Ablation suites: variants x seeds, a baseline on the originals, one table.

A cell trains one variant with one seed, synthesizes the evaluation slices and
scores them (S_dice, iD and the adversary's final training dice). Cells are
independent and write only below ``<out>/cells/<name>``, so they can run as
parallel Celery workers. A failed cell is recorded, never raised; the table
marks the gap.
"""
from __future__ import annotations

import logging
import os

from marshmallow import ValidationError as SchemaValidationError

from ..exceptions import GVSError
from ..models import Variant
from ..observability import run_context
from ..schemas import protocol_schema, training_config_schema
from .datasets import dataset_fingerprint, drop_healthy, load_slice_pairs, select_fraction, split
from .metrics import id_metric, mean_std, s_dice, write_dice_csv
from .runs import finish_run, start_run, write_json, write_manifest
from .synthesis import synthesize, synthetic_pairs
from .training import segmentor_generalization, train

logger = logging.getLogger(__name__)

VARIANT_COLUMNS = (
    ('GVS', Variant.FULL),
    ('w/o L_R+', Variant.NO_RPLUS),
    ('w/o L_wce', Variant.NO_WCE),
)
BASELINE = 'Baseline'
FINAL_EPOCHS = 3
GAP = 'n/a'

_ROWS = (
    ('s_dice', 'S_dice', 2),
    ('id', 'iD', 2),
    ('final_dice', 'final dice', 3),
    ('generalization', 'generalization', 3),
)


def cell_name(variant: str, seed: int, fraction: float = 1.0) -> str:
    name = f'{variant}-s{seed}'
    if fraction != 1.0:
        name += f'-f{fraction:g}'
    return name


def evaluation_split(pairs, holdout: float, seed: int):
    """(train, evaluate) pairs; without a holdout both are the full set."""
    if not holdout:
        return list(pairs), list(pairs)
    return split(pairs, 1.0 - holdout, seed)


def final_dice(values, window: int = FINAL_EPOCHS) -> float | None:
    """Mean training dice of the adversary over its last ``window`` epochs."""
    if not values:
        return None
    tail = values[-window:]
    return float(sum(tail) / len(tail))


def _failure(record, exc):
    if isinstance(exc, SchemaValidationError):
        error = {'error': 'validation_error', 'message': 'input failed validation',
                 'details': exc.messages}
    else:
        error = {'error': exc.slug, 'message': exc.message}
    record.update(status='failed', error=error)
    logger.warning('ablation cell failed', extra={'cell': record['cell'], **error})


def run_cell(data_dir, out_dir, config: dict, variant: str, seed: int,
             fraction: float = 1.0, holdout: float = 0.0, protocol: dict | None = None,
             device='cpu') -> dict:
    """Train, synthesize and score one (variant, seed, fraction) cell."""
    name = cell_name(variant, seed, fraction)
    cell_dir = os.path.join(out_dir, 'cells', name)
    record = {'cell': name, 'variant': variant, 'seed': seed, 'fraction': fraction,
              'status': 'ok'}
    try:
        run_config = training_config_schema.load({**config, 'variant': variant, 'seed': seed})
        run_protocol = protocol_schema.load({**(protocol or {}), 'seed': seed})
        pairs = load_slice_pairs(data_dir)
        train_pairs, eval_pairs = evaluation_split(pairs, holdout, seed)
        train_pairs = select_fraction(train_pairs, fraction, seed)

        manifest = start_run('cell', run_config.to_dict(), dataset_fingerprint(data_dir),
                             run_id=name, train_size=len(train_pairs),
                             eval_size=len(eval_pairs), fraction=fraction, holdout=holdout)
        write_manifest(manifest, cell_dir)
        with run_context(name):
            state, report = train(run_config, train_pairs, run_dir=cell_dir, device=device)
            synthetics = synthesize(state.generator, eval_pairs, run_config.batch_size)
            total, series = s_dice(synthetic_pairs(eval_pairs, synthetics), run_protocol,
                                   device=device)
            id_mean, id_std = id_metric(zip(eval_pairs, synthetics))
        write_dice_csv(series, os.path.join(cell_dir, 'sdice.csv'))
        record.update(
            s_dice=total,
            id_mean=id_mean,
            id_std=id_std,
            final_dice=final_dice(report.dice_series.values),
            train_size=len(train_pairs),
            eval_size=len(eval_pairs),
        )
        held_out = drop_healthy(eval_pairs) if holdout else []
        if held_out:
            record['generalization'] = segmentor_generalization(
                state, held_out, run_config.batch_size)
        finish_run(manifest, cell_dir, status='ok')
    except (GVSError, SchemaValidationError) as exc:
        _failure(record, exc)
    write_json(record, os.path.join(cell_dir, 'cell.json'))
    return record


def run_baseline(data_dir, out_dir, seed: int, holdout: float = 0.0,
                 protocol: dict | None = None, device='cpu') -> dict:
    """S_dice and iD of the untouched originals (iD is 1 by construction)."""
    name = f'baseline-s{seed}'
    record = {'cell': name, 'variant': BASELINE, 'seed': seed, 'fraction': 1.0,
              'status': 'ok'}
    try:
        run_protocol = protocol_schema.load({**(protocol or {}), 'seed': seed})
        pairs = load_slice_pairs(data_dir)
        _, eval_pairs = evaluation_split(pairs, holdout, seed)
        with run_context(name):
            total, series = s_dice(eval_pairs, run_protocol, device=device)
            id_mean, id_std = id_metric((pair, pair.image) for pair in eval_pairs)
        cell_dir = os.path.join(out_dir, 'cells', name)
        os.makedirs(cell_dir, exist_ok=True)
        write_dice_csv(series, os.path.join(cell_dir, 'sdice.csv'))
        record.update(s_dice=total, id_mean=id_mean, id_std=id_std,
                      eval_size=len(eval_pairs))
    except (GVSError, SchemaValidationError) as exc:
        _failure(record, exc)
    return record


# --- Table ------------------------------------------------------------------

def _summary(cells, key):
    values = [cell[key] for cell in cells if cell.get(key) is not None]
    if not values:
        return None
    mean, std = mean_std(values)
    return {'mean': mean, 'std': std, 'n': len(values)}


def _column(cells, expected):
    ok = [cell for cell in cells if cell['status'] == 'ok']
    return {
        's_dice': _summary(ok, 's_dice'),
        'id': _summary(ok, 'id_mean'),
        'final_dice': _summary(ok, 'final_dice'),
        'generalization': _summary(ok, 'generalization'),
        'failed': sorted(cell['cell'] for cell in cells if cell['status'] != 'ok'),
        'expected': expected,
    }


def build_table(cells, baselines, seeds) -> dict:
    """Mean +- std over seeds per column; a column with failed cells lists them."""
    columns = {}
    for label, variant in VARIANT_COLUMNS:
        chosen = [c for c in cells if c['variant'] == variant and c['fraction'] == 1.0]
        if chosen:
            columns[label] = {'variant': variant, **_column(chosen, len(seeds))}
    columns[BASELINE] = {'variant': None, **_column(list(baselines), len(seeds))}

    fractions = {}
    for cell in cells:
        if cell['variant'] == Variant.FULL:
            fractions.setdefault(cell['fraction'], []).append(cell)
    sweep = [{'fraction': fraction, **_column(group, len(seeds))}
             for fraction, group in sorted(fractions.items())] if len(fractions) > 1 else []

    return {
        'columns': columns,
        'order': list(columns),
        'fractions': sweep,
        'seeds': list(seeds),
        'complete': not any(column['failed'] for column in columns.values())
        and not any(row['failed'] for row in sweep),
    }


def _format_cell(summary, digits, failed):
    if summary is None:
        return GAP
    text = f"{summary['mean']:.{digits}f} ± {summary['std']:.{digits}f}"
    return text + '*' if failed else text


def format_table(table) -> str:
    """Aligned plain-text rendering of ``build_table``'s result."""
    header = ['metric', *table['order']]
    lines = [header]
    for key, label, digits in _ROWS:
        row = [label]
        for name in table['order']:
            column = table['columns'][name]
            row.append(_format_cell(column[key], digits, column['failed']))
        if any(cell != GAP for cell in row[1:]):
            lines.append(row)
    for entry in table['fractions']:
        lines.append([f"S_dice @ {entry['fraction']:g}",
                      _format_cell(entry['s_dice'], 2, entry['failed'])])

    widths = [max(len(row[i]) for row in lines if i < len(row)) for i in range(len(header))]
    text = [
        '  '.join(cell.ljust(widths[i]) for i, cell in enumerate(row)).rstrip()
        for row in lines
    ]
    failed = sorted({name for column in table['columns'].values() for name in column['failed']}
                    | {name for row in table['fractions'] for name in row['failed']})
    if failed:
        text.append('* failed cells: ' + ', '.join(failed))
    return '\n'.join(text) + '\n'
