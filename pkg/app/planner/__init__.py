# app/planner/__init__.py
