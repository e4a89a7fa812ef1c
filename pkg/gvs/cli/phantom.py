import click

from ..exceptions import ValidationError
from ..helper import format_duration
from ..networks import DIVISOR
from ..observability import Stopwatch
from ..schemas import phantom_spec_schema
from ..services.datasets import dataset_fingerprint, generate_phantoms, write_slice_pairs
from ..services.runs import finish_run, start_run
from .common import ensure_out_dir


@click.command('phantom')
@click.option('--out', required=True, type=click.Path(file_okay=False),
              help='Dataset directory to write (images/ and masks/).')
@click.option('--n', 'n_slices', default=200, show_default=True, help='Number of slices.')
@click.option('--size', default=128, show_default=True,
              help=f'Side length in pixels; must be divisible by {DIVISOR}.')
@click.option('--contrast', default=0.35, show_default=True,
              help='Peak lesion offset on the [0, 1] intensity scale.')
@click.option('--radius-min', default=0.05, show_default=True,
              help='Smallest lesion radius, as a fraction of the side.')
@click.option('--radius-max', default=0.12, show_default=True,
              help='Largest lesion radius, as a fraction of the side.')
@click.option('--texture-scale', default=1.0, show_default=True,
              help='Spatial scale of the background texture bumps.')
@click.option('--seed', default=0, show_default=True)
def phantom(out, n_slices, size, contrast, radius_min, radius_max, texture_scale, seed):
    """Generate a seeded lesion phantom dataset."""
    if size % DIVISOR:
        raise ValidationError(f'side must be divisible by {DIVISOR}, got {size}', field='size')
    spec = phantom_spec_schema.load({
        'size': size,
        'n_slices': n_slices,
        'lesion_contrast': contrast,
        'lesion_radius_range': [radius_min, radius_max],
        'texture_scale': texture_scale,
        'seed': seed,
    })
    watch = Stopwatch()
    pairs = generate_phantoms(spec)
    ensure_out_dir(out)
    write_slice_pairs(pairs, out)
    fingerprint = dataset_fingerprint(out)
    manifest = start_run('phantom', phantom_spec_schema.dump(spec), fingerprint)
    finish_run(manifest, out, duration_ms=watch.elapsed_ms)
    click.echo(f'phantom: {len(pairs)} slices {size}x{size} -> {out} '
               f"({format_duration(watch.elapsed_ms)}) sha256={fingerprint['sha256']}")
