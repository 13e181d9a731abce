# app/llm/cassette.py
import difflib
import json
import logging
import threading
from datetime import datetime, timezone
from typing import Dict, List, Optional

from pydantic import BaseModel, model_validator

from app.exceptions import BackendError, CassetteMissError
from app.llm.backend import BackendRequest, LLMBackend

logger = logging.getLogger(__name__)

CASSETTE_FORMAT_VERSION = 1


class CassetteEntry(BaseModel):
    digest: str
    request: Dict[str, str]
    response: str


class Cassette(BaseModel):
    """
    Recorded request/response pairs.

    File layout (JSON object):
      format_version  integer, currently 1
      suite_id        free-form label of what was recorded
      recorded_at     ISO-8601 UTC timestamp
      entries         list of {digest, request, response}; `request` is the
                      canonical request snapshot whose sha256 is `digest`
    """
    format_version: int = CASSETTE_FORMAT_VERSION
    suite_id: str = ""
    recorded_at: str = ""
    entries: List[CassetteEntry] = []

    @model_validator(mode="after")
    def _unique_digests(self) -> "Cassette":
        seen = set()
        for entry in self.entries:
            if entry.digest in seen:
                raise ValueError(f"duplicate digest {entry.digest} in cassette")
            seen.add(entry.digest)
        return self

    def lookup(self, digest: str) -> Optional[CassetteEntry]:
        return next((e for e in self.entries if e.digest == digest), None)

    def nearest(self, request: BackendRequest) -> Optional[str]:
        """Digest of the recorded request most similar to `request`."""
        if not self.entries:
            return None
        target = json.dumps(request.canonical(), sort_keys=True)
        scored = [
            (difflib.SequenceMatcher(None, target, json.dumps(e.request, sort_keys=True)).ratio(), e.digest)
            for e in self.entries
        ]
        return max(scored)[1]

    def save(self, path: str) -> None:
        try:
            with open(path, "w", encoding="utf-8") as f:
                f.write(self.model_dump_json(indent=2))
                f.write("\n")
        except OSError as e:
            raise BackendError(f"cannot write cassette {path}: {e}") from e

    @classmethod
    def load(cls, path: str) -> "Cassette":
        with open(path, "r", encoding="utf-8") as f:
            return cls.model_validate_json(f.read())


class CassetteBackend(LLMBackend):
    """Replays a cassette by request digest. Strict mode raises on a miss."""

    def __init__(self, cassette: Cassette, strict: bool = True, stub_response: str = "{}"):
        super().__init__()
        self.cassette = cassette
        self.strict = strict
        self.stub_response = stub_response
        self._index = {e.digest: e.response for e in cassette.entries}

    def _invoke(self, request: BackendRequest) -> str:
        digest = request.digest()
        response = self._index.get(digest)
        if response is not None:
            logger.debug(f"cassette hit {request.role.value} {digest[:12]}")
            return response
        if self.strict:
            raise CassetteMissError(digest, self.cassette.nearest(request))
        logger.warning(f"cassette miss {request.role.value} {digest[:12]}, returning stub")
        return self.stub_response


class RecordingBackend(LLMBackend):
    """Forwards to another backend and records every exchange."""

    def __init__(self, inner: LLMBackend):
        super().__init__()
        self.inner = inner
        self._entries: Dict[str, CassetteEntry] = {}
        self._record_lock = threading.Lock()

    def _invoke(self, request: BackendRequest) -> str:
        response = self.inner.invoke(request)
        digest = request.digest()
        with self._record_lock:
            existing = self._entries.get(digest)
            if existing is None:
                self._entries[digest] = CassetteEntry(digest=digest, request=request.canonical(), response=response)
            elif existing.response != response:
                logger.warning(f"request {digest[:12]} answered differently on repeat; keeping the first response")
        return response

    def cassette(self, suite_id: str = "", recorded_at: Optional[str] = None) -> Cassette:
        with self._record_lock:
            entries = [self._entries[d] for d in sorted(self._entries)]
        return Cassette(
            suite_id=suite_id,
            recorded_at=recorded_at or datetime.now(timezone.utc).isoformat(timespec="seconds"),
            entries=entries,
        )
