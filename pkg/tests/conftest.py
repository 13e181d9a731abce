# tests/conftest.py
import os

import pytest

from app.config import settings
from app.llm.scripted import ScriptedBackend
from app.multirobot.models import load_environment
from app.pddl.parser import parse_domain

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
SUITE = os.path.join(ROOT, "app", "data", "suite")
FIXTURES = os.path.join(os.path.dirname(os.path.abspath(__file__)), "fixtures")

BLOCKS = """
(define (domain blocks)
  (:requirements :strips :typing)
  (:types block)
  (:predicates (on ?x - block ?y - block) (ontable ?x - block) (clear ?x - block)
               (holding ?x - block) (handempty))
  (:action pickup
    :parameters (?x - block)
    :precondition (and (clear ?x) (ontable ?x) (handempty))
    :effect (and (holding ?x) (not (ontable ?x)) (not (clear ?x)) (not (handempty))))
  (:action putdown
    :parameters (?x - block)
    :precondition (holding ?x)
    :effect (and (ontable ?x) (clear ?x) (handempty) (not (holding ?x))))
  (:action stack
    :parameters (?x - block ?y - block)
    :precondition (and (holding ?x) (clear ?y))
    :effect (and (on ?x ?y) (clear ?x) (handempty) (not (holding ?x)) (not (clear ?y))))
  (:action unstack
    :parameters (?x - block ?y - block)
    :precondition (and (on ?x ?y) (clear ?x) (handempty))
    :effect (and (holding ?x) (clear ?y) (not (on ?x ?y)) (not (clear ?x)) (not (handempty)))))
"""

BLOCKS_PROBLEM = """
(define (problem stack-two)
  (:domain blocks)
  (:objects a b c - block)
  (:init (ontable a) (ontable b) (on c a) (clear b) (clear c) (handempty))
  (:goal (and (on a b))))
"""


@pytest.fixture(autouse=True)
def _isolated_settings(monkeypatch):
    """Every test sees the default settings, whatever a CLI test overrode."""
    for key, value in vars(type(settings)).items():
        if key.isupper():
            monkeypatch.setattr(settings, key, value, raising=False)
    monkeypatch.setattr(settings, "EXTERNAL_PLANNER", None)
    monkeypatch.setattr(settings, "PARALLEL", 1)
    yield


@pytest.fixture
def suite_root():
    return SUITE


@pytest.fixture
def suite_script():
    return os.path.join(SUITE, "script.yaml")


@pytest.fixture
def scripted(suite_script):
    return ScriptedBackend.from_file(suite_script)


@pytest.fixture
def kitchen_domain():
    with open(os.path.join(SUITE, "domains", "kitchen.pddl"), "r", encoding="utf-8") as f:
        return parse_domain(f.read())


@pytest.fixture
def kitchen_case():
    return load_environment(os.path.join(SUITE, "envs", "kitchen_case.yaml"))


@pytest.fixture
def kitchen_b():
    return load_environment(os.path.join(SUITE, "envs", "kitchen_b.yaml"))


@pytest.fixture
def meta_sharing_dir():
    return os.path.join(FIXTURES, "meta_sharing")
