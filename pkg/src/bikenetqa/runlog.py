"""Line-delimited JSON run log."""

from __future__ import annotations

import json
import logging
import sys
import threading
import time
from pathlib import Path
from typing import Any

logger = logging.getLogger("bikenetqa")


class RunLog:
    """Collects warnings and progress events for one run.

    Events are kept in memory and can be flushed to a ``.jsonl`` file. When
    ``echo`` is set every event is also written to stderr as it happens.
    """

    def __init__(self, echo: bool = False) -> None:
        self.events: list[dict[str, Any]] = []
        self.echo = echo
        self._lock = threading.Lock()

    def _add(self, level: str, event: str, fields: dict[str, Any]) -> None:
        record = {"time": round(time.time(), 3), "level": level, "event": event, **fields}
        with self._lock:
            self.events.append(record)
        if self.echo:
            print(json.dumps(record, default=str), file=sys.stderr, flush=True)

    def info(self, event: str, **fields: Any) -> None:
        self._add("info", event, fields)

    def warn(self, event: str, **fields: Any) -> None:
        logger.warning("%s %s", event, fields)
        self._add("warning", event, fields)

    @property
    def warnings(self) -> list[dict[str, Any]]:
        return [e for e in self.events if e["level"] == "warning"]

    def write(self, path: Path) -> None:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "a", encoding="utf-8") as fh:
            for e in self.events:
                fh.write(json.dumps(e, default=str) + "\n")
