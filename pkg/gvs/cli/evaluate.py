import os

import click

from ..exceptions import DataError
from ..models import MetricsReport, SlicePair
from ..schemas import metrics_report_schema, protocol_schema
from ..services import metrics
from ..services.datasets import load_slice_pairs
from ..services.runs import read_manifest, write_json
from .common import load_protocol


def _matched(originals, synthetics):
    by_id = {pair.id: pair for pair in synthetics}
    unmatched = sorted({p.id for p in originals} ^ set(by_id))
    if unmatched:
        raise DataError('unmatched ids: ' + ', '.join(unmatched), ids=unmatched)
    return [by_id[pair.id] for pair in originals]


def _row(report: MetricsReport) -> str:
    cells = []
    if report.s_dice is not None:
        cells.append(f'S_dice {report.s_dice:.2f}')
    if report.id_mean is not None:
        cells.append(f'iD {report.id_mean:.2f} ± {report.id_std:.2f}')
    return ' | '.join(cells)


@click.command('eval')
@click.option('--data', required=True, type=click.Path(exists=True, file_okay=False),
              help='Original slices and their masks.')
@click.option('--synth', 'synth_dir', required=True,
              type=click.Path(exists=True, file_okay=False),
              help='Synthetic slices with the same ids.')
@click.option('--metric', type=click.Choice(['sdice', 'id', 'both']), default='both',
              show_default=True)
@click.option('--protocol', 'protocol_file', type=click.Path(exists=True, dir_okay=False),
              help='JSON S_dice protocol (default: 20 epochs, width 16, seed 0).')
@click.option('--scales', type=int, help='MS-SSIM scales (default: as many as fit).')
@click.option('--out', required=True, type=click.Path(dir_okay=False),
              help='Report path; the S_dice series goes next to it as CSV.')
@click.pass_obj
def evaluate(runtime, data, synth_dir, metric, protocol_file, scales, out):
    """Score synthetic images for healthiness (S_dice) and identity (iD)."""
    protocol = load_protocol(protocol_file)
    originals = load_slice_pairs(data)
    manifest = read_manifest(synth_dir)
    rescale = manifest.extra.get('intensity_scale', 'minmax') if manifest else 'minmax'
    synthetics = _matched(originals, load_slice_pairs(synth_dir, rescale=rescale))

    report = MetricsReport(dataset=os.path.abspath(data),
                           protocol=protocol_schema.dump(protocol))
    if metric in ('sdice', 'both'):
        relabelled = [SlicePair(id=o.id, image=s.image, mask=o.mask)
                      for o, s in zip(originals, synthetics)]
        report.s_dice, report.dice_series = metrics.s_dice(relabelled, protocol,
                                                           device=runtime.device)
        metrics.write_dice_csv(report.dice_series, os.path.splitext(out)[0] + '.csv')
    if metric in ('id', 'both'):
        images = [s.image for s in synthetics]
        report.id_mean, report.id_std = metrics.id_metric(zip(originals, images), scales)
        report.difference_stats = metrics.difference_statistics(originals, images)

    write_json(metrics_report_schema.dump(report), out)
    click.echo(_row(report))
