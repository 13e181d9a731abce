# app/llm/factory.py
from typing import Optional

from app.exceptions import ConfigurationError
from app.llm.backend import LLMBackend
from app.llm.cassette import Cassette, CassetteBackend
from app.llm.openai_client import LiveBackend, LiveBackendConfig
from app.llm.scripted import ScriptedBackend

BACKEND_KINDS = ("live", "cassette", "scripted")


def create_backend(
    kind: str,
    cassette: Optional[str] = None,
    script: Optional[str] = None,
    strict: bool = True,
    live_config: Optional[LiveBackendConfig] = None,
) -> LLMBackend:
    """Builds the backend named by `kind`; the rest of the app only sees LLMBackend."""
    if kind == "live":
        return LiveBackend(live_config or LiveBackendConfig.from_settings())
    if kind == "cassette":
        if not cassette:
            raise ConfigurationError("--backend cassette requires --cassette PATH")
        try:
            return CassetteBackend(Cassette.load(cassette), strict=strict)
        except FileNotFoundError as e:
            raise ConfigurationError(f"cassette not found: {cassette}") from e
        except ValueError as e:
            raise ConfigurationError(f"cassette {cassette} is invalid: {e}") from e
    if kind == "scripted":
        if not script:
            raise ConfigurationError("--backend scripted requires --script PATH")
        try:
            return ScriptedBackend.from_file(script, strict=strict)
        except FileNotFoundError as e:
            raise ConfigurationError(f"script not found: {script}") from e
    raise ConfigurationError(f"unknown backend '{kind}', expected one of {', '.join(BACKEND_KINDS)}")
