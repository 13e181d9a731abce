# app/utils/records.py
import json
import os
import threading
from typing import Any, Dict, Iterable, Iterator, List, Optional

from pydantic import BaseModel


def to_record(item: Any) -> Any:
    if isinstance(item, BaseModel):
        return item.model_dump(mode="json")
    if isinstance(item, dict):
        return {str(k): to_record(v) for k, v in item.items()}
    if isinstance(item, (list, tuple)):
        return [to_record(v) for v in item]
    return item


def dumps_record(item: Any) -> str:
    return json.dumps(to_record(item), sort_keys=True, ensure_ascii=False)


def write_jsonl(path: str, items: Iterable[Any], append: bool = False) -> str:
    """Writes one JSON object per line with sorted keys. Returns the path."""
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, "a" if append else "w", encoding="utf-8", newline="\n") as f:
        for item in items:
            f.write(dumps_record(item))
            f.write("\n")
    return path


def read_jsonl(path: str) -> Iterator[Dict[str, Any]]:
    with open(path, "r", encoding="utf-8") as f:
        for number, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                yield json.loads(line)
            except json.JSONDecodeError as e:
                raise ValueError(f"{path}:{number}: not a JSON record: {e}") from e


def write_json(path: str, item: Any) -> str:
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(json.dumps(to_record(item), sort_keys=True, ensure_ascii=False, indent=2))
        f.write("\n")
    return path


# ============================
# Run trace
# ============================
class TraceEvent(BaseModel):
    seq: int
    kind: str
    iteration: Optional[int] = None
    agent: Optional[str] = None
    data: Dict[str, Any] = {}


class RunTrace:
    """
    Ordered event log of one planning run. Events carry sequence numbers
    instead of timestamps so two identical runs produce identical logs.
    """

    def __init__(self):
        self._events: List[TraceEvent] = []
        self._lock = threading.Lock()

    def emit(self, kind: str, iteration: Optional[int] = None, agent: Optional[str] = None, **data: Any) -> TraceEvent:
        with self._lock:
            event = TraceEvent(
                seq=len(self._events),
                kind=kind,
                iteration=iteration,
                agent=agent,
                data={k: to_record(v) for k, v in data.items()},
            )
            self._events.append(event)
        return event

    @property
    def events(self) -> List[TraceEvent]:
        with self._lock:
            return list(self._events)

    def of_kind(self, kind: str) -> List[TraceEvent]:
        return [e for e in self.events if e.kind == kind]

    def __len__(self) -> int:
        return len(self._events)

    def save(self, path: str) -> str:
        return write_jsonl(path, self.events)

    @classmethod
    def load(cls, path: str) -> "RunTrace":
        trace = cls()
        trace._events = [TraceEvent.model_validate(r) for r in read_jsonl(path)]
        return trace
