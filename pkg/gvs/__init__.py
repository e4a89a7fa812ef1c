"""Runtime factory.

The Celery app and the logging setup are module-level singletons bound to a
configuration inside ``create_runtime`` so the runtime can be built several
times (tests, workers, CLI) with different profiles.
"""
from dataclasses import dataclass

import torch

from config import config

__version__ = '0.1.0'


@dataclass
class Runtime:
    settings: type
    device: torch.device
    config_name: str


_current = None


def create_runtime(config_name='default'):
    """Build and configure the process-wide runtime."""
    global _current
    settings = config[config_name]
    runtime = Runtime(settings=settings, device=torch.device(settings.DEVICE),
                      config_name=config_name)
    settings.init_app(runtime)

    if settings.DETERMINISTIC:
        torch.use_deterministic_algorithms(True, warn_only=True)

    # Structured JSON logging with run ids.
    from .observability import init_observability
    init_observability(settings)

    # Ablation cells (Celery). Eager in development and testing.
    from .tasks import init_celery
    init_celery(runtime)

    _current = runtime
    return runtime


def current_runtime():
    """The runtime built last, creating the default one on first use."""
    return _current if _current is not None else create_runtime()
