# app/evaluation/__init__.py
