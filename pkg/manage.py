"""Development entrypoint.

``python manage.py <command>`` runs the ``gvs`` command line from a checkout
(``python manage.py train --data ...``); ``python manage.py test`` runs the
unit tests. Loads a local .env file if python-dotenv is available.
"""
import sys

try:
    from dotenv import load_dotenv
    load_dotenv()
except ImportError:  # dotenv is optional in production images
    pass

from gvs.cli import cli


@cli.command('test')
def test():
    """Run the unit tests."""
    import pytest
    raise SystemExit(pytest.main(['-q']))


if __name__ == '__main__':
    cli.main(args=sys.argv[1:], prog_name='manage.py')
