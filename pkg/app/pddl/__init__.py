# app/pddl/__init__.py
