# tests/test_celery.py
import dataclasses

import pytest

from app.evaluation.suite import SuiteRunConfig, load_suite, run_suite
from celery_worker import celery_app, run_episode_task
from tests.conftest import SUITE


@pytest.fixture
def eager(monkeypatch):
    monkeypatch.setattr(celery_app.conf, "task_always_eager", True)
    monkeypatch.setattr(celery_app.conf, "task_eager_propagates", True)


def test_episode_task_returns_a_json_record(eager):
    options = SuiteRunConfig(seeds=1).to_options()
    record = run_episode_task.delay(SUITE, "va1", 0, options).get()
    assert record["task_id"] == "va1"
    assert record["success"] is True
    assert record["category"] == "vague"


def test_celery_executor_matches_local(eager):
    suite = load_suite(SUITE, with_truth=False)
    subset = dataclasses.replace(suite, tasks=(suite.task("va1"), suite.task("case")))
    local = run_suite(subset, SuiteRunConfig(seeds=1))
    remote = run_suite(subset, SuiteRunConfig(seeds=1, executor="celery"))
    assert remote.results == local.results
