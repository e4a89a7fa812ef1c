"""The ``gvs`` command line: phantom, train, synth, eval, ablate.

Defaults are the published settings (lambda 1.0, lambda1 0.1, 20 epochs,
batch size 8, Adam at 1e-3 decayed by 0.1 after 80% of the epochs).
"""
import click

from config import config

from .. import __version__, create_runtime
from .errors import GVSGroup


@click.group(cls=GVSGroup)
@click.option('--config-name', envvar='GVS_CONFIG', default='default', show_default=True,
              type=click.Choice(sorted(config)), help='Runtime profile (GVS_CONFIG).')
@click.version_option(__version__, prog_name='gvs')
@click.pass_context
def cli(ctx, config_name):
    """Pseudo-healthy synthesis by generator-versus-segmentor training."""
    ctx.obj = create_runtime(config_name)


def main(argv=None):
    try:
        from dotenv import load_dotenv
        load_dotenv()
    except ImportError:  # dotenv is optional in production images
        pass
    return cli.main(args=argv, prog_name='gvs')


from .ablate import ablate  # noqa: E402
from .evaluate import evaluate  # noqa: E402
from .phantom import phantom  # noqa: E402
from .synth import synth  # noqa: E402
from .train import train  # noqa: E402

for command in (phantom, train, synth, evaluate, ablate):
    cli.add_command(command)
