"""Celery worker entrypoint for ablation cells.

Start a worker with::

    GVS_CONFIG=production CELERY_BROKER_URL=redis://localhost:6379/0 \
    CELERY_RESULT_BACKEND=redis://localhost:6379/1 \
        celery -A celery_worker.celery worker --loglevel=info

The runtime is created so tasks train on the configured device with JSON logs.
"""
import os

try:
    from dotenv import load_dotenv
    load_dotenv()
except ImportError:
    pass

from gvs import create_runtime
from gvs.tasks import celery_app as celery

runtime = create_runtime(os.getenv('GVS_CONFIG') or 'default')

# Import task modules so the worker registers them.
import gvs.tasks  # noqa: E402,F401
