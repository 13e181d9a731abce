# celery_worker.py
from celery import Celery
from app.config import settings
from app.evaluation.suite import SuiteRunConfig, load_suite, run_episode

celery_app = Celery(
    "worker",
    broker=settings.CELERY_BROKER_URL,
    backend=settings.CELERY_RESULT_BACKEND
)

# Loaded suites per worker process, keyed by suite directory
_suites = {}


@celery_app.task
def run_episode_task(suite_root: str, task_id: str, seed: int, options: dict) -> dict:
    suite = _suites.get(suite_root)
    if suite is None:
        suite = _suites[suite_root] = load_suite(suite_root)
    config = SuiteRunConfig.from_options(options)
    backend = config.backend_factory(suite)()
    result = run_episode(suite.task(task_id), seed, backend, config.hierarchy)
    return result.model_dump(mode="json")
