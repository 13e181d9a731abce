# app/multirobot/__init__.py
