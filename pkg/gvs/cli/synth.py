import click

from ..helper import file_sha256, format_duration
from ..networks import GENERATOR, load_params
from ..observability import Stopwatch
from ..services.datasets import dataset_fingerprint, load_slice_pairs
from ..services.runs import finish_run, start_run
from ..services.synthesis import INTENSITY_SCALE, synthesize, write_outputs
from .common import ensure_out_dir


@click.command('synth')
@click.option('--ckpt', required=True, type=click.Path(exists=True, dir_okay=False),
              help='Generator checkpoint (generator.bin or a training checkpoint).')
@click.option('--data', required=True, type=click.Path(exists=True, file_okay=False))
@click.option('--out', required=True, type=click.Path(file_okay=False))
@click.option('--absolute-diff', is_flag=True,
              help='Render difference maps on the data scale instead of per-image max.')
@click.option('--batch-size', default=8, show_default=True)
@click.pass_obj
def synth(runtime, ckpt, data, out, absolute_diff, batch_size):
    """Write pseudo-healthy images, difference maps and panels."""
    generator, ckpt_manifest = load_params(ckpt, GENERATOR, device=runtime.device)
    generator.eval()
    pairs = load_slice_pairs(data)
    watch = Stopwatch()
    synthetics = synthesize(generator, pairs, batch_size=batch_size)
    ensure_out_dir(out)
    counts = write_outputs(pairs, synthetics, out, absolute=absolute_diff)

    config = {'checkpoint_sha256': file_sha256(ckpt), 'absolute_diff': absolute_diff,
              'source_config_hash': ckpt_manifest.get('config_hash')}
    manifest = start_run('synth', config, dataset_fingerprint(data),
                         intensity_scale=INTENSITY_SCALE, **counts)
    finish_run(manifest, out, duration_ms=watch.elapsed_ms)
    click.echo(f"synth: {counts['images']} slices -> {out} "
               f'({format_duration(watch.elapsed_ms)})')
