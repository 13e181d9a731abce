# app/optim/history.py
import logging
import threading
from collections import defaultdict
from typing import Dict, Iterable, List, Optional

from app.exceptions import PlanningError
from app.optim.schemas import PromptVersion
from app.utils.records import read_jsonl, write_jsonl

logger = logging.getLogger(__name__)


class PromptHistory:
    """
    Append-only store of prompt versions keyed by owner (an agent id or
    `meta:<layer>`). Versions of one owner strictly increase.
    """

    def __init__(self, versions: Iterable[PromptVersion] = ()):
        self._lock = threading.Lock()
        self._by_owner: Dict[str, List[PromptVersion]] = defaultdict(list)
        self._order: List[PromptVersion] = []
        for version in versions:
            self.record(version)

    def record(self, version: PromptVersion) -> None:
        with self._lock:
            versions = self._by_owner[version.owner]
            if versions and version.version <= versions[-1].version:
                raise PlanningError(
                    f"prompt version {version.version} of {version.owner} does not follow {versions[-1].version}"
                )
            versions.append(version)
            self._order.append(version)
        logger.debug(f"prompt {version.owner} v{version.version} ({version.provenance})")

    def history(self, owner: str) -> List[PromptVersion]:
        with self._lock:
            return list(self._by_owner.get(owner, ()))

    def latest(self, owner: str) -> Optional[PromptVersion]:
        versions = self.history(owner)
        return versions[-1] if versions else None

    def version(self, owner: str, number: int) -> PromptVersion:
        for item in self.history(owner):
            if item.version == number:
                return item
        raise KeyError(f"{owner} has no prompt version {number}")

    @property
    def owners(self) -> List[str]:
        with self._lock:
            return sorted(self._by_owner)

    def __iter__(self):
        with self._lock:
            return iter(list(self._order))

    def __len__(self) -> int:
        return len(self._order)

    def save(self, path: str) -> str:
        return write_jsonl(path, list(self))

    @classmethod
    def load(cls, path: str) -> "PromptHistory":
        return cls(PromptVersion.model_validate(r) for r in read_jsonl(path))
