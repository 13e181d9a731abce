# app/llm/__init__.py
