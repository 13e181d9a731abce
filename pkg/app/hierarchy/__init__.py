# app/hierarchy/__init__.py
