"""Service layer.

Services hold the domain logic (data, losses, the adversarial game, metrics,
synthesis, run bookkeeping). Commands and Celery tasks call into services
rather than re-implementing any of it.
"""
