"""Runtime configuration (12-factor).

Environment-specific values (where runs are written, which device trains, how
ablation cells are dispatched) are read from environment variables with local
defaults. Training hyperparameters are *not* here: they travel with each run as
a validated JSON config (see ``gvs.schemas``) so every manifest can reproduce
them.
"""
import os

base_dir = os.path.abspath(os.path.dirname(__file__))


def _bool(name: str, default: bool = False) -> bool:
    """Parse a boolean environment variable."""
    value = os.environ.get(name)
    if value is None:
        return default
    return value.strip().lower() in {'1', 'true', 'yes', 'on'}


class Config:
    """Settings shared across every environment."""

    DEBUG = False
    TESTING = False

    LOG_LEVEL = os.environ.get('GVS_LOG_LEVEL', 'INFO')
    DEVICE = os.environ.get('GVS_DEVICE', 'cpu')
    # torch.use_deterministic_algorithms; the rerun-identical contract needs it.
    DETERMINISTIC = _bool('GVS_DETERMINISTIC', True)
    DEFAULT_RUNS_DIR = os.path.join(base_dir, 'runs')

    # Celery (ablation cells). Eager unless a worker pool is configured.
    CELERY_BROKER_URL = os.environ.get('CELERY_BROKER_URL', 'memory://')
    CELERY_RESULT_BACKEND = os.environ.get('CELERY_RESULT_BACKEND', 'cache+memory://')
    CELERY_TASK_ALWAYS_EAGER = _bool('GVS_CELERY_EAGER', True)

    @classmethod
    def runs_dir(cls) -> str:
        """Root for run artifacts; ``GVS_RUNS_DIR`` is read at call time."""
        return os.environ.get('GVS_RUNS_DIR') or cls.DEFAULT_RUNS_DIR

    @staticmethod
    def init_app(runtime):
        pass


class DevelopmentConfig(Config):
    DEBUG = True
    LOG_LEVEL = os.environ.get('GVS_LOG_LEVEL', 'DEBUG')


class TestingConfig(Config):
    TESTING = True
    LOG_LEVEL = os.environ.get('GVS_LOG_LEVEL', 'WARNING')
    DEVICE = 'cpu'
    # Run Celery tasks inline in tests instead of dispatching to a worker.
    CELERY_BROKER_URL = 'memory://'
    CELERY_RESULT_BACKEND = 'cache+memory://'
    CELERY_TASK_ALWAYS_EAGER = True


class ProductionConfig(Config):
    CELERY_TASK_ALWAYS_EAGER = _bool('GVS_CELERY_EAGER', False)

    @classmethod
    def init_app(cls, runtime):
        Config.init_app(runtime)
        # Fail fast if cells would be dispatched without a real broker.
        if not cls.CELERY_TASK_ALWAYS_EAGER:
            required = {
                'CELERY_BROKER_URL': os.environ.get('CELERY_BROKER_URL'),
                'CELERY_RESULT_BACKEND': os.environ.get('CELERY_RESULT_BACKEND'),
            }
            missing = [name for name, value in required.items() if not value]
            if missing:
                raise RuntimeError(
                    'Missing required production environment variables: '
                    + ', '.join(missing)
                )


config = {
    'development': DevelopmentConfig,
    'testing': TestingConfig,
    'production': ProductionConfig,
    'default': DevelopmentConfig,
}
