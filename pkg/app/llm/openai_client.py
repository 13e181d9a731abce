# app/llm/openai_client.py
import logging
import time
from dataclasses import dataclass
from typing import Any, Callable, Optional

import openai
from openai import OpenAI
from tenacity import RetryCallState, Retrying, retry_if_exception_type, stop_after_attempt, wait_exponential

from app.config import settings
from app.exceptions import BackendError, BackendTimeoutError, ConfigurationError, RateLimitError
from app.llm.backend import BackendRequest, LLMBackend, strip_code_fence

logger = logging.getLogger(__name__)

TRANSIENT_ERRORS = (openai.RateLimitError, openai.APITimeoutError, openai.APIConnectionError)


@dataclass(frozen=True)
class LiveBackendConfig:
    model: str = "gpt-4o"
    api_key: Optional[str] = None
    base_url: Optional[str] = None
    timeout: float = 60.0
    max_retries: int = 3
    backoff_base: float = 1.0

    @classmethod
    def from_settings(cls) -> "LiveBackendConfig":
        return cls(
            model=settings.LLM_MODEL,
            api_key=settings.OPENAI_API_KEY,
            base_url=settings.OPENAI_BASE_URL,
            timeout=settings.LLM_TIMEOUT,
            max_retries=settings.LLM_MAX_RETRIES,
            backoff_base=settings.LLM_BACKOFF_BASE,
        )


def _retry_after(exc: BaseException) -> Optional[float]:
    response = getattr(exc, "response", None)
    headers = getattr(response, "headers", None) or {}
    value = headers.get("retry-after")
    try:
        return float(value) if value is not None else None
    except ValueError:
        return None


class _BackoffOrRetryAfter:
    """Exponential backoff, unless a rate limit names its own delay."""

    def __init__(self, backoff_base: float):
        self.exponential = wait_exponential(multiplier=backoff_base, exp_base=2)

    def __call__(self, retry_state: RetryCallState) -> float:
        error = retry_state.outcome.exception() if retry_state.outcome else None
        if isinstance(error, openai.RateLimitError):
            retry_after = _retry_after(error)
            if retry_after is not None:
                return retry_after
        return self.exponential(retry_state)


class LiveBackend(LLMBackend):
    """
    OpenAI-compatible chat-completions client. Temperature is fixed at 0;
    rate limits, timeouts and connection errors are retried up to
    `max_retries` times with exponential backoff.
    """

    def __init__(self, config: LiveBackendConfig, client: Optional[Any] = None,
                 sleep: Callable[[float], None] = time.sleep):
        super().__init__()
        self.config = config
        if client is None:
            if not config.api_key:
                raise ConfigurationError("OpenAI API key not set. Please set the OPENAI_API_KEY environment variable.")
            # retries are handled here, not inside the SDK
            client = OpenAI(api_key=config.api_key, base_url=config.base_url or None,
                            timeout=config.timeout, max_retries=0)
        self.client = client
        self._sleep = sleep

    def _log_retry(self, retry_state: RetryCallState) -> None:
        error = retry_state.outcome.exception() if retry_state.outcome else None
        delay = retry_state.next_action.sleep if retry_state.next_action else 0.0
        logger.warning(f"request attempt {retry_state.attempt_number}/{self.config.max_retries + 1} "
                       f"failed: {error!r}; retrying in {delay:.1f}s")

    def _complete(self, request: BackendRequest) -> str:
        response = self.client.chat.completions.create(
            model=self.config.model,
            messages=request.messages(),
            temperature=0,
        )
        if not response.choices:
            raise BackendError(f"{self.config.model} returned no choices for a {request.role.value} request")
        return strip_code_fence(response.choices[0].message.content or "")

    def _invoke(self, request: BackendRequest) -> str:
        attempts = max(0, self.config.max_retries) + 1
        retrying = Retrying(
            stop=stop_after_attempt(attempts),
            wait=_BackoffOrRetryAfter(self.config.backoff_base),
            retry=retry_if_exception_type(TRANSIENT_ERRORS),
            before_sleep=self._log_retry,
            sleep=self._sleep,
            reraise=True,
        )
        try:
            return retrying(self._complete, request)
        except openai.RateLimitError as e:
            raise RateLimitError(f"rate limited by {self.config.model}", _retry_after(e)) from e
        except (openai.APITimeoutError, openai.APIConnectionError) as e:
            raise BackendTimeoutError(f"request failed after {attempts} attempts: {e}") from e
        except openai.APIError as e:
            raise BackendError(f"OpenAI API request failed: {e}") from e
