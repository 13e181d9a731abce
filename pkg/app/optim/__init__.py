# app/optim/__init__.py
