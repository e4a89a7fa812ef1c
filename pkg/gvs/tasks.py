"""Celery integration and background tasks.

The Celery app is created here and configured from the runtime settings in
``init_celery``. Ablation cells are tasks so a suite can be spread over a
worker pool; each cell writes only to its own directory.

In the development and testing profiles ``CELERY_TASK_ALWAYS_EAGER`` makes
tasks run inline, so no worker/broker is needed.
"""
from celery import Celery, Task

celery_app = Celery(__name__)


def init_celery(runtime):
    """Configure Celery from the runtime settings and hand tasks its device."""
    settings = runtime.settings
    celery_app.conf.update(
        broker_url=settings.CELERY_BROKER_URL,
        result_backend=settings.CELERY_RESULT_BACKEND,
        task_always_eager=settings.CELERY_TASK_ALWAYS_EAGER,
        task_ignore_result=False,
        task_serializer='json',
        result_serializer='json',
        accept_content=['json'],
        worker_prefetch_multiplier=1,
        broker_connection_retry_on_startup=True,
    )

    class RuntimeTask(Task):
        abstract = True

        def __call__(self, *args, **kwargs):
            kwargs.setdefault('device', str(runtime.device))
            return super().__call__(*args, **kwargs)

    celery_app.Task = RuntimeTask
    return celery_app


@celery_app.task(name='gvs.tasks.run_ablation_cell')
def run_ablation_cell(data_dir, out_dir, config, variant, seed, fraction=1.0,
                      holdout=0.0, protocol=None, device='cpu'):
    """Train and score one (variant, seed, fraction) cell; returns its record."""
    # Imported here to avoid a circular import at module load time.
    from .services.ablation import run_cell

    return run_cell(data_dir, out_dir, config, variant, seed, fraction=fraction,
                    holdout=holdout, protocol=protocol, device=device)


@celery_app.task(name='gvs.tasks.run_baseline_cell')
def run_baseline_cell(data_dir, out_dir, seed, holdout=0.0, protocol=None, device='cpu'):
    """Score the original images for one seed."""
    from .services.ablation import run_baseline

    return run_baseline(data_dir, out_dir, seed, holdout=holdout, protocol=protocol,
                        device=device)
